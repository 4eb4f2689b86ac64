#pragma once

#include "promptlab/transformer.hpp"

#include <span>
#include <vector>

namespace plab {

// Uniform-weight atomic measure (1/m) sum_i delta_{x_i}. Atoms are a
// multiset: duplicates carry their own mass.
struct EmpiricalMeasure {
    std::vector<Vector> atoms;

    Index size() const { return static_cast<Index>(atoms.size()); }
    Index dim() const { return atoms.empty() ? 0 : atoms.front().size(); }
    TokenMatrix as_matrix() const;
};

// Atoms carry a position stamp s in [0, 1]; from_tokens uses s_i = i / m
// (1-based i).
struct TimedAtom {
    double stamp = 0.0;
    Vector x;
};

struct TimedMeasure {
    std::vector<TimedAtom> atoms;

    Index size() const { return static_cast<Index>(atoms.size()); }
};

EmpiricalMeasure from_tokens(const TokenMatrix& x);
TimedMeasure timed_from_tokens(const TokenMatrix& x);

// Mean-field attention field Gamma_mu(x): for an atomic measure the
// integrals reduce to softmax-weighted sums over atoms.
Vector gamma(const EmpiricalMeasure& mu, const Vector& x, std::span<const HeadWeights> heads);

// (Gamma_mu)_# mu: attention only, no residual or MLP.
EmpiricalMeasure attention_pushforward(const EmpiricalMeasure& mu, std::span<const HeadWeights> heads);

// Delta_mu(x) = MLP(Gamma_mu(x) + x) applied to every atom, with Gamma
// evaluated against the input measure throughout.
EmpiricalMeasure pushforward_layer(const EmpiricalMeasure& mu, const LayerWeights& layer);

// Each atom (s, x) attends to the atoms stamped <= s; stamps are kept.
TimedMeasure masked_pushforward(const TimedMeasure& mu, const LayerWeights& layer);
TimedMeasure masked_attention_pushforward(const TimedMeasure& mu, std::span<const HeadWeights> heads);

// Exact W_q between uniform atomic measures via minimum-cost matching.
// Unequal sizes are replicated up to their least common multiple when that
// is at most 256; otherwise PreconditionError.
double wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double q);

// Position-aware distance: mass only moves between atoms with identical
// stamps. Requires identical stamp multisets.
double masked_distance(const TimedMeasure& mu, const TimedMeasure& nu, double q);

} // namespace plab
