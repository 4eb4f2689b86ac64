#pragma once

#include "promptlab/prompt_grad.hpp"
#include "promptlab/transformer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace plab {

// Head outputs of the query x_0 against the two-token contexts [x_i, x_0],
// i = 1..h+1, and an orthonormal basis of their span E.
struct HeadVectorSet {
    Vector x0;
    std::vector<Vector> probes;              // x_1 .. x_{h+1}
    std::vector<std::vector<Vector>> a;      // a[i][k], i over probes, k over heads
    std::vector<Vector> e_basis;

    Index heads() const { return a.empty() ? 0 : static_cast<Index>(a.front().size()); }
};

// Requires h + 1 probes and d - h(h+1) >= h+1.
HeadVectorSet head_attention_vectors(const Vector& x0, std::span<const Vector> probes,
                                     std::span<const HeadWeights> heads);

// Splits the head-k attention of x_0 over [P, x_i, x_0] into the softmax
// mass lambda on the [x_i, x_0] block and mu = 1 - lambda on the prompt:
//   direct = lambda * block_output + mu * prompt_output
struct PromptedDecomposition {
    double lambda = 0.0;
    double mu = 0.0; // computed from the prompt mass directly, not as 1 - lambda
    Vector block_output;  // Att^k(x_0, [x_i, x_0])
    Vector prompt_output; // Att^k(x_0, P)
    Vector direct;        // Att^k(x_0, [P, x_i, x_0])
};

PromptedDecomposition decompose_prompted_attention(const Vector& x0, const Vector& xi, const TokenMatrix& prompt,
                                                   const HeadWeights& head);

// 1 - |W_1|_2 |W_2|_2. Positive margin makes the residual MLP invertible.
double mlp_invertibility_margin(const LayerWeights& layer);

// Rescales W_1 and W_2 by a common factor so the margin is at least
// `min_margin`; leaves layers that already comply untouched.
void enforce_invertibility_margin(LayerWeights& layer, double min_margin);

// Solves mlp_apply(z) = y by the contraction z <- y - b_2 - W_2 ReLU(W_1 z + b_1)
// starting from y - b_2. `residuals`, when given, receives
// |mlp_apply(z_t) - y| for every iterate.
Vector mlp_invert(const Vector& y, const LayerWeights& layer, double tol, std::vector<double>* residuals = nullptr,
                  int max_iterations = 100'000);

struct InaccessibleTargets {
    std::vector<Vector> y_prime; // pairwise orthogonal directions in E-perp
    std::vector<Vector> y;       // MLP(y'_i + x_0)
    double margin = 0.0;         // 1 - |W_1|_2 |W_2|_2
    double r = 0.0;              // min_i |y_i|_2
    double bound = 0.0;          // margin * r / 2
};

InaccessibleTargets build_inaccessible_targets(const HeadVectorSet& hv, const LayerWeights& layer, double scale,
                                               std::uint64_t seed);

double inaccessibility_bound(const InaccessibleTargets& targets);

struct CertificateConfig {
    std::vector<Index> prompt_lengths{1, 2, 4, 8, 16};
    TuneConfig tune;            // prompt_length is overridden per sweep entry
    double tolerance = 1e-6;
    double project_radius = 0.0; // 0: largest norm among x_0, probes and targets
};

struct PromptLengthOutcome {
    Index prompt_length = 0;
    double best_max_error = 0.0;
    std::vector<double> per_target_error;
};

struct Certificate {
    std::string instance_hash;
    double bound = 0.0;
    double invertibility_margin = 0.0;
    double embedding_radius = 0.0;
    double orthogonality_residual = 0.0; // max |<y'_i, a_jk>|, |<y'_i, y'_j>|
    std::vector<PromptLengthOutcome> outcomes;
    double slack = 0.0; // min_mp best_max_error - (bound - tolerance); >= 0 iff passed
    bool passed = false;
    std::string note;
};

// For each prompt length, tunes a prompt against the pairs
// ([x_i, x_0] -> y_i at the last column) and records the best achieved
// max_i |tau([P, x_i, x_0])_{-1} - y_i|_2. Passes iff that value stays at or
// above bound - tolerance for every prompt length.
Certificate certify_inaccessibility(const TransformerWeights& w, const HeadVectorSet& hv,
                                    const InaccessibleTargets& targets, const CertificateConfig& cfg);

std::string render_certificate(const Certificate& cert);

// FNV-1a over the raw bytes of every weight and vector involved.
std::string instance_hash(const TransformerWeights& w, std::span<const Vector> vectors);

} // namespace plab
