#pragma once

#include "promptlab/transformer.hpp"

#include <cstdint>
#include <span>

namespace plab {

// Sampling-based lower bounds on Lipschitz constants: the largest difference
// quotient over seeded input pairs with every token in the radius-r ball.
// Half of the pairs are independent draws; the other half are local
// perturbations X, X + delta with |delta| spread over four decades.
struct ProbeConfig {
    double r = 1.0;
    Index tokens = 4;
    Index samples = 10'000;
    std::uint64_t seed = 0;
    bool masked = false;
};

struct ProbeResult {
    double max_quotient = 0.0;
    Index pairs = 0; // pairs with a nonzero input distance
};

// f(X) = (masked) multi-head self-attention without residual.
ProbeResult empirical_attention_quotient(std::span<const HeadWeights> heads, Index d, const ProbeConfig& cfg);

ProbeResult empirical_layer_quotient(const LayerWeights& layer, Index d, const ProbeConfig& cfg);

ProbeResult empirical_model_quotient(const TransformerWeights& w, const ProbeConfig& cfg);

// W_2(F(mu), F(nu)) / W_2(mu, nu) for the attention pushforward F over
// measures with cfg.tokens atoms. With cfg.masked the position-aware
// distance and causal pushforward are used instead.
ProbeResult empirical_meanfield_quotient(std::span<const HeadWeights> heads, Index d, const ProbeConfig& cfg);

} // namespace plab
