#include "promptlab/covering.hpp"

#include "promptlab/errors.hpp"

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace plab {

Matrix euclidean_distances(std::span<const Vector> points)
{
    const Index n = static_cast<Index>(points.size());
    Matrix dist = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            const double v = (points[static_cast<std::size_t>(i)] - points[static_cast<std::size_t>(j)]).norm();
            dist(i, j) = v;
            dist(j, i) = v;
        }
    return dist;
}

namespace {

void check_budget(const Matrix& distances, double eps)
{
    if (!(eps > 0.0)) throw PreconditionError("covering radius eps must be positive");
    if (distances.rows() != distances.cols()) throw ShapeError("distance matrix must be square");
    if (distances.rows() > max_brute_force_points)
        throw PreconditionError("brute-force search limited to " + std::to_string(max_brute_force_points) +
                                " points, got " + std::to_string(distances.rows()));
}

// Advances `combo` to the next k-subset of [0, n) in lexicographic order.
bool next_combination(std::vector<Index>& combo, Index n)
{
    const Index k = static_cast<Index>(combo.size());
    for (Index i = k - 1; i >= 0; --i) {
        if (combo[static_cast<std::size_t>(i)] < n - k + i) {
            ++combo[static_cast<std::size_t>(i)];
            for (Index j = i + 1; j < k; ++j) combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
            return true;
        }
    }
    return false;
}

} // namespace

Index brute_force_covering(const Matrix& distances, double eps)
{
    check_budget(distances, eps);
    const Index n = distances.rows();
    if (n == 0) return 0;

    // reach[c]: bitmask of points inside the closed eps-ball around c.
    std::vector<std::uint32_t> reach(static_cast<std::size_t>(n), 0);
    for (Index c = 0; c < n; ++c)
        for (Index p = 0; p < n; ++p)
            if (distances(c, p) <= eps) reach[static_cast<std::size_t>(c)] |= 1u << p;
    const std::uint32_t all = (1u << n) - 1u;

    for (Index size = 1; size <= n; ++size) {
        std::vector<Index> combo(static_cast<std::size_t>(size));
        for (Index i = 0; i < size; ++i) combo[static_cast<std::size_t>(i)] = i;
        do {
            std::uint32_t covered = 0;
            for (Index c : combo) covered |= reach[static_cast<std::size_t>(c)];
            if (covered == all) return size;
        } while (next_combination(combo, n));
    }
    return n;
}

Index brute_force_packing(const Matrix& distances, double eps)
{
    check_budget(distances, eps);
    const Index n = distances.rows();
    std::vector<std::uint32_t> conflict(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (i != j && !(distances(i, j) > eps)) conflict[static_cast<std::size_t>(i)] |= 1u << j;

    int best = 0;
    const std::uint32_t subsets = 1u << n;
    for (std::uint32_t s = 1; s < subsets; ++s) {
        const int size = std::popcount(s);
        if (size <= best) continue;
        bool separated = true;
        for (std::uint32_t rest = s; rest != 0 && separated; rest &= rest - 1) {
            const int i = std::countr_zero(rest);
            if (conflict[static_cast<std::size_t>(i)] & s) separated = false;
        }
        if (separated) best = size;
    }
    return best;
}

Index brute_force_covering(std::span<const Vector> points, double eps)
{
    if (static_cast<Index>(points.size()) > max_brute_force_points)
        throw PreconditionError("brute-force search limited to " + std::to_string(max_brute_force_points) + " points");
    return brute_force_covering(euclidean_distances(points), eps);
}

Index brute_force_packing(std::span<const Vector> points, double eps)
{
    if (static_cast<Index>(points.size()) > max_brute_force_points)
        throw PreconditionError("brute-force search limited to " + std::to_string(max_brute_force_points) + " points");
    return brute_force_packing(euclidean_distances(points), eps);
}

} // namespace plab
