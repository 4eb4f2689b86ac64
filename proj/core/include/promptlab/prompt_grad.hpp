#pragma once

#include "promptlab/transformer.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace plab {

struct MemorizationPair {
    TokenMatrix x; // d x m input
    TokenMatrix y; // d x m target
};

// A set of input/target pairs that a single pre-prompt should reproduce.
// With `last_column_only` the loss and the per-pair errors look at the final
// output column alone (the single-layer certificates target one token).
struct MemorizationTask {
    std::vector<MemorizationPair> pairs;
    double eps = 1e-3;
    Norm norm = Norm::frobenius;
    double radius = 1.0;
    bool masked = false;
    bool last_column_only = false;

    Index size() const { return static_cast<Index>(pairs.size()); }

    // Throws ShapeError / PreconditionError. Radius is checked with `slack`
    // absolute tolerance on every column norm.
    void validate(Index d, double slack = 1e-9) const;
};

struct TuneConfig {
    Index prompt_length = 1;
    double lr = 1e-2;
    int iters = 2000;
    int restarts = 8;
    std::uint64_t seed = 0;
    double init_scale = 0.1;
    double project_radius = 1.0;
    int threads = 1;              // restarts run concurrently when > 1 (0 = all cores)
    bool stop_on_success = true;  // end a restart once every pair is within eps

    void validate() const;
};

struct TuneResult {
    TokenMatrix best_prompt;
    std::vector<double> per_pair_error;
    std::vector<bool> success;
    std::vector<double> loss_trace;      // losses of the winning restart, one per evaluation
    int restarts_used = 0;               // restarts that ran to completion
    int aborted_restarts = 0;            // restarts stopped by a non-finite loss
    std::optional<int> iters_to_success; // optimizer steps taken by the winner before success

    double max_error() const;
};

// Deviation of the prompted output from the target of pair i, under task.norm.
double pair_error(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task,
                  Index pair);

// (1/k) sum_i ||forward_with_prompt(w, P, X^i) - Y^i||_F^2
double memorization_loss(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task);

// Exact gradient of memorization_loss with respect to the prompt entries.
TokenMatrix grad_prompt(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task);

struct LossAndGradient {
    double loss = 0.0;
    TokenMatrix gradient;
    std::vector<double> per_pair_error;
};

LossAndGradient loss_and_grad(const TransformerWeights& w, const TokenMatrix& prompt, const MemorizationTask& task);

// Multi-restart Adam on the raw prompt matrix with every column projected
// back onto the radius ball after each step. Restart r is seeded with
// cfg.seed + r; the restart with the smallest max-over-pairs error wins
// (ties go to the lower index), so results do not depend on cfg.threads.
TuneResult tune_prompt(const TransformerWeights& w, const MemorizationTask& task, const TuneConfig& cfg);

// Inclusive: an error exactly equal to eps counts as reached.
bool is_accessible(const TuneResult& result, double eps);

} // namespace plab
