#pragma once

#include "promptlab/linalg.hpp"
#include "promptlab/transformer.hpp"

#include <cmath>

namespace plab::fixtures {

inline HeadWeights random_head(Index d, Index s, Rng& rng, double scale = 1.0)
{
    const double g = scale / std::sqrt(static_cast<double>(d));
    return {g * sample_normal(s, d, rng), g * sample_normal(s, d, rng), g * sample_normal(s, d, rng),
            g * sample_normal(d, s, rng)};
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

} // namespace plab::fixtures
