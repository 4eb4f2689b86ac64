#pragma once

#include "promptlab/linalg.hpp"

#include <span>

namespace plab {

// Exhaustive search budget for the brute-force counts.
inline constexpr Index max_brute_force_points = 14;

Matrix euclidean_distances(std::span<const Vector> points);

// Minimal number of closed eps-balls centred at points of the set that
// cover the set. Subsets are enumerated by increasing size.
Index brute_force_covering(const Matrix& distances, double eps);
Index brute_force_covering(std::span<const Vector> points, double eps);

// Largest subset whose pairwise distances all exceed eps.
Index brute_force_packing(const Matrix& distances, double eps);
Index brute_force_packing(std::span<const Vector> points, double eps);

} // namespace plab
