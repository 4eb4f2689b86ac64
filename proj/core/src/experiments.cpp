#include "promptlab/experiments.hpp"

#include "promptlab/errors.hpp"
#include "promptlab/lipschitz_probe.hpp"
#include "promptlab/meanfield.hpp"
#include "promptlab/parallel.hpp"
#include "promptlab/weights_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace plab {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    std::uint64_t s = mix(master);
    s = mix(s ^ a);
    s = mix(s ^ b);
    return mix(s ^ c);
}

TransformerWeights ModelSource::materialize() const
{
    if (weights_path) return load_weights(*weights_path);
    return random_weights(random);
}

// ---------------------------------------------------------------------------

void SweepConfig::validate() const
{
    if (m < 1) throw PreconditionError("capacity sweep: m must be at least 1");
    if (trials < 1) throw PreconditionError("capacity sweep: trials must be at least 1");
    if (!(r > 0.0)) throw PreconditionError("capacity sweep: r must be positive");
    if (!(eps > 0.0)) throw PreconditionError("capacity sweep: eps must be positive");
    if (prompt_lengths.empty() || ks.empty()) throw PreconditionError("capacity sweep: empty m_p or k grid");
    for (Index k : ks)
        if (k < 0) throw PreconditionError("capacity sweep: k must be nonnegative");
    for (Index mp : prompt_lengths)
        if (mp < 0) throw PreconditionError("capacity sweep: m_p must be nonnegative");
    tune.validate();
}

namespace {

struct TrialOutcome {
    bool success = false;
    double max_error = 0.0;
    double iters = 0.0;
};

TrialOutcome run_trial(const TransformerWeights& w, const SweepConfig& cfg, Index mp, Index k, Index trial)
{
    TrialOutcome out;
    if (k == 0) {
        out.success = true;
        return out;
    }
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(mp), static_cast<std::uint64_t>(k),
                                           static_cast<std::uint64_t>(trial));
    Rng rng(seed);
    MemorizationTask task;
    task.eps = cfg.eps;
    task.norm = cfg.norm;
    task.radius = cfg.r;
    task.masked = cfg.masked;

    TokenMatrix hidden;
    if (cfg.planted) hidden = sample_ball_columns(w.d(), mp, cfg.r, cfg.norm, rng);
    for (Index i = 0; i < k; ++i) {
        TokenMatrix x = sample_ball_columns(w.d(), cfg.m, cfg.r, cfg.norm, rng);
        TokenMatrix y = cfg.planted ? forward_with_prompt(w, hidden, x, cfg.masked)
                                    : sample_ball_columns(w.d(), cfg.m, cfg.r, cfg.norm, rng);
        if (cfg.planted)
            for (Index j = 0; j < y.cols(); ++j) task.radius = std::max(task.radius, vector_norm(y.col(j), cfg.norm));
        task.pairs.push_back({std::move(x), std::move(y)});
    }

    TuneConfig tc = cfg.tune;
    tc.prompt_length = mp;
    tc.project_radius = cfg.r;
    tc.seed = seed;
    tc.threads = 1;
    const TuneResult res = tune_prompt(w, task, tc);
    out.success = is_accessible(res, cfg.eps);
    out.max_error = res.max_error();
    if (out.success) out.iters = res.iters_to_success ? static_cast<double>(*res.iters_to_success) : 0.0;
    return out;
}

} // namespace

std::vector<SweepRow> run_capacity_sweep(const SweepConfig& cfg)
{
    cfg.validate();
    const TransformerWeights w = cfg.model.materialize();
    w.validate();

    std::vector<Index> mps = cfg.prompt_lengths;
    std::vector<Index> ks = cfg.ks;
    std::sort(mps.begin(), mps.end());
    mps.erase(std::unique(mps.begin(), mps.end()), mps.end());
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

    struct Job {
        std::size_t cell;
        Index mp, k, trial;
    };
    std::vector<Job> jobs;
    for (std::size_t a = 0; a < mps.size(); ++a)
        for (std::size_t b = 0; b < ks.size(); ++b)
            for (Index t = 0; t < cfg.trials; ++t) jobs.push_back({a * ks.size() + b, mps[a], ks[b], t});

    std::vector<TrialOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
        outcomes[j] = run_trial(w, cfg, jobs[j].mp, jobs[j].k, jobs[j].trial);
    });

    std::vector<SweepRow> rows;
    for (std::size_t a = 0; a < mps.size(); ++a)
        for (std::size_t b = 0; b < ks.size(); ++b) {
            SweepRow row;
            row.m_p = mps[a];
            row.k = ks[b];
            row.trials = cfg.trials;
            double err = 0.0;
            double iters = 0.0;
            for (std::size_t j = 0; j < jobs.size(); ++j) {
                if (jobs[j].cell != a * ks.size() + b) continue;
                err += outcomes[j].max_error;
                if (outcomes[j].success) {
                    ++row.successes;
                    iters += outcomes[j].iters;
                }
            }
            const double n = static_cast<double>(cfg.trials);
            row.success_rate = static_cast<double>(row.successes) / n;
            row.mean_final_max_error = err / n;
            row.mean_iters_to_success = row.successes > 0 ? iters / static_cast<double>(row.successes)
                                                           : std::numeric_limits<double>::quiet_NaN();
            rows.push_back(row);
        }
    return rows;
}

CsvTable sweep_csv(const std::vector<SweepRow>& rows)
{
    CsvTable table({"k", "m_p", "trials", "successes", "success_rate", "mean_final_max_error",
                    "mean_iters_to_success"});
    for (const auto& r : rows)
        table.add_row({std::to_string(r.k), std::to_string(r.m_p), std::to_string(r.trials),
                       std::to_string(r.successes), format_double(r.success_rate),
                       format_double(r.mean_final_max_error), format_double(r.mean_iters_to_success)});
    return table;
}

std::vector<PlotSeries> sweep_plot_series(const std::vector<SweepRow>& rows)
{
    struct Metric {
        const char* name;
        double SweepRow::*field;
    };
    const Metric metrics[] = {{"success_rate", &SweepRow::success_rate},
                              {"mean_final_max_error", &SweepRow::mean_final_max_error},
                              {"mean_iters_to_success", &SweepRow::mean_iters_to_success}};
    std::vector<PlotSeries> out;
    if (rows.empty()) {
        for (const auto& m : metrics) out.push_back({m.name, "k", m.name, {}});
        return out;
    }
    std::vector<Index> mps;
    for (const auto& r : rows)
        if (std::find(mps.begin(), mps.end(), r.m_p) == mps.end()) mps.push_back(r.m_p);
    for (const auto& m : metrics)
        for (Index mp : mps) {
            PlotSeries s{std::string(m.name) + "_mp" + std::to_string(mp), "k", m.name, {}};
            for (const auto& r : rows)
                if (r.m_p == mp) s.points.emplace_back(static_cast<double>(r.k), r.*(m.field));
            out.push_back(std::move(s));
        }
    return out;
}

// ---------------------------------------------------------------------------

AuditReport run_lipschitz_audit(const AuditConfig& cfg)
{
    if (!(cfg.r > 0.0)) throw PreconditionError("audit: radius must be positive");
    if (cfg.tokens < 1) throw PreconditionError("audit: tokens must be at least 1");
    if (cfg.samples < 1) throw PreconditionError("audit: samples must be at least 1");
    const TransformerWeights w = cfg.model.materialize();
    w.validate();

    AuditReport report;
    report.analytic = lip_transformer_bound(w, cfg.r, cfg.tokens, LipschitzRegime::discrete);
    report.margin = std::numeric_limits<double>::infinity();
    auto add = [&report](AuditLine line) {
        line.pass = line.empirical <= line.analytic;
        report.margin = std::min(report.margin, line.analytic - line.empirical);
        report.lines.push_back(std::move(line));
    };
    for (Index l = 0; l < w.depth(); ++l) {
        const auto& lb = report.analytic.layers[static_cast<std::size_t>(l)];
        ProbeConfig pc{lb.radius, cfg.tokens, cfg.samples, derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(l)),
                       cfg.masked};
        const auto probe = empirical_layer_quotient(w.layers[static_cast<std::size_t>(l)], w.d(), pc);
        add({"layer " + std::to_string(l), lb.radius, lb.bound, probe.max_quotient, false});
    }
    ProbeConfig pc{cfg.r, cfg.tokens, cfg.samples, derive_seed(cfg.seed, 2), cfg.masked};
    add({"model", cfg.r, report.analytic.whole_model, empirical_model_quotient(w, pc).max_quotient, false});
    report.passed = std::all_of(report.lines.begin(), report.lines.end(), [](const AuditLine& l) { return l.pass; });
    return report;
}

std::string render_audit(const AuditReport& report)
{
    std::ostringstream out;
    out << "tokens: " << report.analytic.tokens << "\n";
    out << "radius: " << format_double(report.analytic.radius) << "\n";
    for (std::size_t l = 0; l < report.analytic.layers.size(); ++l) {
        const auto& lb = report.analytic.layers[l];
        out << "layer " << l << ": attention_factor=" << format_double(lb.attention)
            << " mlp_factor=" << format_double(lb.mlp_factor) << "\n";
        for (std::size_t k = 0; k < lb.heads.size(); ++k) {
            const auto& hb = lb.heads[k];
            out << "  head " << k << ": wv_op=" << format_double(hb.wv_op) << " a_op=" << format_double(hb.a_op)
                << " bound=" << format_double(hb.bound) << " tight_regime=" << (hb.tight ? "yes" : "no") << "\n";
        }
    }
    out << "scope,radius,analytic,empirical,verdict\n";
    for (const auto& line : report.lines)
        out << line.scope << "," << format_double(line.radius) << "," << format_double(line.analytic) << ","
            << format_double(line.empirical) << "," << (line.pass ? "PASS" : "FAIL") << "\n";
    out << "margin: " << format_double(report.margin) << "\n";
    out << "verdict: " << (report.passed ? "PASS" : "FAIL") << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------

MeanfieldReport run_meanfield_check(const MeanfieldConfig& cfg)
{
    if (cfg.trials < 1 || cfg.max_d < 1 || cfg.max_tokens < 1 || cfg.heads < 1)
        throw PreconditionError("meanfield check: counts must be at least 1");
    MeanfieldReport report;
    report.trials = cfg.trials;
    for (Index t = 0; t < cfg.trials; ++t) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
        ModelDims dims;
        dims.d = 1 + rng.below(cfg.max_d);
        dims.h = cfg.heads;
        dims = complete_dims(dims);
        const Index m = 1 + rng.below(cfg.max_tokens);
        const LayerWeights layer = random_layer(dims, cfg.gain, rng);
        const TokenMatrix x = sample_ball_columns(dims.d, m, cfg.r, Norm::l2, rng);

        const double dev =
            wasserstein(pushforward_layer(from_tokens(x), layer), from_tokens(layer_forward(x, layer, false)), 2.0);
        const double masked_dev = masked_distance(masked_pushforward(timed_from_tokens(x), layer),
                                                  timed_from_tokens(layer_forward(x, layer, true)), 2.0);
        report.max_deviation = std::max(report.max_deviation, dev);
        report.max_masked_deviation = std::max(report.max_masked_deviation, masked_dev);
    }
    report.passed = report.max_deviation <= cfg.tolerance && report.max_masked_deviation <= cfg.tolerance;
    return report;
}

std::string render_meanfield(const MeanfieldReport& report, double tolerance)
{
    std::ostringstream out;
    out << "trials: " << report.trials << "\n";
    out << "max_w2_deviation: " << format_double(report.max_deviation) << "\n";
    out << "max_masked_deviation: " << format_double(report.max_masked_deviation) << "\n";
    out << "tolerance: " << format_double(tolerance) << "\n";
    out << "margin: " << format_double(tolerance - std::max(report.max_deviation, report.max_masked_deviation))
        << "\n";
    out << "verdict: " << (report.passed ? "PASS" : "FAIL") << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------

CertifyRun run_single_layer_certificate(const CertifyConfig& cfg)
{
    CertifyRun run;
    Rng rng(cfg.seed);
    if (cfg.weights_path) {
        run.weights = load_weights(*cfg.weights_path);
    } else {
        RandomModelSpec spec;
        spec.dims.d = cfg.d;
        spec.dims.h = cfg.heads;
        spec.dims.d_ff = cfg.d_ff;
        spec.layers = 1;
        spec.gain = cfg.gain;
        spec.seed = derive_seed(cfg.seed, 1);
        run.weights = random_weights(spec);
        enforce_invertibility_margin(run.weights.layers.front(), cfg.min_margin);
    }
    run.weights.validate();
    if (run.weights.depth() != 1) throw PreconditionError("certify: weights must have exactly one layer");
    const auto& layer = run.weights.layers.front();
    const Index d = run.weights.d();
    const Index h = run.weights.dims.h;

    Rng inputs(derive_seed(cfg.seed, 2));
    const Vector x0 = sample_ball(d, cfg.input_radius, Norm::l2, inputs);
    std::vector<Vector> probes;
    for (Index i = 0; i <= h; ++i) probes.push_back(sample_ball(d, cfg.input_radius, Norm::l2, inputs));

    run.head_vectors = head_attention_vectors(x0, probes, layer.heads);
    run.targets = build_inaccessible_targets(run.head_vectors, layer, cfg.target_scale, derive_seed(cfg.seed, 3));

    if (cfg.planted_prompt_length) {
        Rng planted(derive_seed(cfg.seed, 4));
        const TokenMatrix prompt = sample_ball_columns(d, *cfg.planted_prompt_length, cfg.input_radius, Norm::l2, planted);
        for (std::size_t i = 0; i < probes.size(); ++i) {
            TokenMatrix x(d, 2);
            x << probes[i], x0;
            run.targets.y[i] = forward_with_prompt(run.weights, prompt, x, false).col(1);
            run.targets.y_prime[i] = mlp_invert(run.targets.y[i], layer, 1e-13) - x0;
        }
        run.targets.bound = inaccessibility_bound(run.targets);
        run.targets.r = 2.0 * run.targets.bound / run.targets.margin;
    }

    run.certificate = certify_inaccessibility(run.weights, run.head_vectors, run.targets, cfg.certificate);
    return run;
}

// ---------------------------------------------------------------------------

BoundsReport run_bounds_calculator(const BoundsConfig& cfg)
{
    BoundsReport report;
    report.query = cfg.query;
    if (cfg.lipschitz_from) {
        const TransformerWeights w = cfg.lipschitz_from->model.materialize();
        report.query.lipschitz =
            lip_transformer_bound(w, cfg.lipschitz_from->r, cfg.lipschitz_from->tokens, LipschitzRegime::discrete)
                .whole_model;
    }
    const auto& qy = report.query;
    // Surfaces precondition failures as errors with the violated condition.
    (void)finite_prompt_threshold(qy);
    (void)meanfield_prompt_threshold(qy);
    report.capacity = capacity_report(qy);

    std::vector<Index> ks = cfg.ks;
    if (ks.empty()) {
        const double top = std::max(1.0, std::ceil(*report.capacity.finite_prompt_threshold / static_cast<double>(qy.m)));
        const Index last = static_cast<Index>(std::min(2.0 * top, 10'000.0));
        for (Index k = 0; k <= last; ++k) ks.push_back(k);
    }
    for (Index k : ks)
        report.table.add_row({std::to_string(k), format_double(finite_prompt_log_proportion_raw(k, qy)),
                              format_double(finite_prompt_log_proportion(k, qy)), format_double(meanfield_prompt_log_proportion_raw(k, qy)),
                              format_double(meanfield_prompt_log_proportion(k, qy))});
    return report;
}

std::string render_bounds(const BoundsReport& report)
{
    const auto& q = report.query;
    const auto& c = report.capacity;
    std::ostringstream out;
    out << "d: " << q.d << "\nm: " << q.m << "\nm_p: " << q.m_p << "\nL: " << format_double(q.lipschitz)
        << "\nr: " << format_double(q.r) << "\neps: " << format_double(q.eps) << "\nq: " << format_double(q.q)
        << "\nC: " << format_double(q.frostman_c) << "\n";
    out << "finite_prompt_threshold: " << format_double(*c.finite_prompt_threshold) << "\n";
    out << "finite_prompt_slope: " << format_double(c.finite_prompt_slope) << "\n";
    out << "meanfield_prompt_threshold: " << format_double(*c.meanfield_prompt_threshold) << " (parametric in C)\n";
    out << "meanfield_prompt_slope: " << format_double(c.meanfield_prompt_slope) << " (parametric in C)\n";
    out << "meanfield_prompt columns: parametric in C\n";
    out << report.table.str();
    return out.str();
}

} // namespace plab
