#include "promptlab/lipschitz_probe.hpp"

#include "promptlab/errors.hpp"
#include "promptlab/meanfield.hpp"

#include <cmath>
#include <type_traits>

namespace plab {

namespace {

template <typename Map, typename Distance>
ProbeResult probe(Index d, const ProbeConfig& cfg, Map&& map, Distance&& distance)
{
    if (!(cfg.r > 0.0)) throw PreconditionError("probe: radius must be positive");
    if (cfg.tokens < 1) throw PreconditionError("probe: need at least one token");
    Rng rng(cfg.seed);
    ProbeResult out;
    for (Index s = 0; s < cfg.samples; ++s) {
        const Matrix x = sample_ball_columns(d, cfg.tokens, cfg.r, Norm::l2, rng);
        Matrix y;
        if (s % 2 == 0) {
            y = sample_ball_columns(d, cfg.tokens, cfg.r, Norm::l2, rng);
        } else {
            const double scale = cfg.r * std::pow(10.0, -rng.uniform(1.0, 5.0));
            y = x + scale * sample_normal(d, cfg.tokens, rng);
            for (Index j = 0; j < y.cols(); ++j) project_to_ball(y.col(j), cfg.r, Norm::l2);
        }
        const double den = distance(x, y);
        if (!(den > 0.0)) continue;
        const double num = distance(map(x), map(y));
        out.max_quotient = std::max(out.max_quotient, num / den);
        ++out.pairs;
    }
    return out;
}

double frobenius_distance(const Matrix& a, const Matrix& b) { return (a - b).norm(); }

} // namespace

ProbeResult empirical_attention_quotient(std::span<const HeadWeights> heads, Index d, const ProbeConfig& cfg)
{
    return probe(
        d, cfg,
        [&](const Matrix& x) { return cfg.masked ? masked_self_attention(x, heads) : self_attention(x, heads); },
        frobenius_distance);
}

ProbeResult empirical_layer_quotient(const LayerWeights& layer, Index d, const ProbeConfig& cfg)
{
    return probe(d, cfg, [&](const Matrix& x) { return layer_forward(x, layer, cfg.masked); }, frobenius_distance);
}

ProbeResult empirical_model_quotient(const TransformerWeights& w, const ProbeConfig& cfg)
{
    return probe(w.d(), cfg, [&](const Matrix& x) { return forward(w, x, cfg.masked); }, frobenius_distance);
}

ProbeResult empirical_meanfield_quotient(std::span<const HeadWeights> heads, Index d, const ProbeConfig& cfg)
{
    if (cfg.masked) {
        return probe(
            d, cfg,
            [&](const Matrix& x) {
                return masked_attention_pushforward(timed_from_tokens(x), heads);
            },
            [](const auto& a, const auto& b) {
                if constexpr (std::is_same_v<std::decay_t<decltype(a)>, Matrix>)
                    return masked_distance(timed_from_tokens(a), timed_from_tokens(b), 2.0);
                else
                    return masked_distance(a, b, 2.0);
            });
    }
    return probe(
        d, cfg, [&](const Matrix& x) { return attention_pushforward(from_tokens(x), heads); },
        [](const auto& a, const auto& b) {
            if constexpr (std::is_same_v<std::decay_t<decltype(a)>, Matrix>)
                return wasserstein(from_tokens(a), from_tokens(b), 2.0);
            else
                return wasserstein(a, b, 2.0);
        });
}

} // namespace plab
