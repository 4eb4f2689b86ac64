#pragma once

#include "promptlab/bounds.hpp"
#include "promptlab/prompt_grad.hpp"
#include "promptlab/report_io.hpp"
#include "promptlab/single_layer.hpp"
#include "promptlab/transformer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plab {

// Mixes a master seed with cell/trial coordinates (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

// A weight file, or a random model when no path is set.
struct ModelSource {
    std::optional<std::filesystem::path> weights_path;
    RandomModelSpec random;

    TransformerWeights materialize() const;
};

// ---------------------------------------------------------------------------
// capacity

struct SweepConfig {
    ModelSource model;
    Index m = 1;
    std::vector<Index> prompt_lengths{4};
    std::vector<Index> ks{0, 1, 2, 4, 8, 16};
    double r = 1.0;
    double eps = 0.05;
    Norm norm = Norm::frobenius;
    bool masked = false;
    bool planted = false; // targets generated from a hidden prompt of the cell's length
    Index trials = 20;
    TuneConfig tune;
    std::uint64_t seed = 0;
    int threads = 1; // trials in flight at once (0 = all cores)

    void validate() const;
};

struct SweepRow {
    Index k = 0;
    Index m_p = 0;
    Index trials = 0;
    Index successes = 0;
    double success_rate = 0.0;
    double mean_final_max_error = 0.0;
    double mean_iters_to_success = 0.0; // NaN when no trial succeeded
};

// Rows sorted by (m_p, k). Every trial draws its inputs (and targets) from
// the radius-r ball with a seed derived from (seed, m_p, k, trial).
std::vector<SweepRow> run_capacity_sweep(const SweepConfig& cfg);

CsvTable sweep_csv(const std::vector<SweepRow>& rows);

// One series per (metric, m_p) with k on the x axis; with no rows, one
// empty series per metric.
std::vector<PlotSeries> sweep_plot_series(const std::vector<SweepRow>& rows);

// ---------------------------------------------------------------------------
// audit

struct AuditConfig {
    ModelSource model;
    double r = 1.0;
    Index tokens = 8;
    Index samples = 10'000;
    std::uint64_t seed = 0;
    bool masked = false;
};

struct AuditLine {
    std::string scope; // "layer 0", ..., "model"
    double radius = 0.0;
    double analytic = 0.0;
    double empirical = 0.0;
    bool pass = false;
};

struct AuditReport {
    LipschitzReport analytic;
    std::vector<AuditLine> lines;
    bool passed = false;
    double margin = 0.0; // min over lines of analytic - empirical
};

AuditReport run_lipschitz_audit(const AuditConfig& cfg);
std::string render_audit(const AuditReport& report);

// ---------------------------------------------------------------------------
// meanfield

struct MeanfieldConfig {
    Index trials = 50;
    Index max_d = 6;
    Index max_tokens = 6;
    Index heads = 2;
    double r = 1.0;
    double gain = 1.0;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;
};

struct MeanfieldReport {
    Index trials = 0;
    double max_deviation = 0.0;        // W_2(pushforward(M(X)), M(layer(X)))
    double max_masked_deviation = 0.0; // position-aware distance, causal variant
    bool passed = false;
};

MeanfieldReport run_meanfield_check(const MeanfieldConfig& cfg);
std::string render_meanfield(const MeanfieldReport& report, double tolerance);

// ---------------------------------------------------------------------------
// certify

struct CertifyConfig {
    Index d = 8;
    Index heads = 1;
    Index d_ff = 0; // 0: 4 d
    double gain = 1.0;
    double min_margin = 0.3;
    double input_radius = 1.0; // x_0 and probes are drawn from this ball
    double target_scale = 1.0; // |y'_i|
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> weights_path;
    CertificateConfig certificate;
    // Counter-case: replace the targets by outputs of a planted prompt of this
    // length. The certificate is then expected to FAIL.
    std::optional<Index> planted_prompt_length;
};

struct CertifyRun {
    TransformerWeights weights;
    HeadVectorSet head_vectors;
    InaccessibleTargets targets;
    Certificate certificate;
};

CertifyRun run_single_layer_certificate(const CertifyConfig& cfg);

// ---------------------------------------------------------------------------
// bounds

struct BoundsConfig {
    CapacityQuery query;
    std::vector<Index> ks;                 // empty: 0 .. 2 * ceil(threshold) for the finite-prompt bound
    std::optional<AuditConfig> lipschitz_from; // take L from the whole-model audit bound
};

struct BoundsReport {
    CapacityQuery query;
    CapacityReport capacity;
    CsvTable table{{"k", "finite_prompt_log_proportion_raw", "finite_prompt_log_proportion", "meanfield_prompt_log_proportion_raw",
                    "meanfield_prompt_log_proportion"}};
};

BoundsReport run_bounds_calculator(const BoundsConfig& cfg);
std::string render_bounds(const BoundsReport& report);

} // namespace plab
