// lab: command-line driver for the promptlab experiments.
//
// Exit status: 0 on PASS or success, 1 on FAIL, 2 on usage or precondition
// errors. Every subcommand accepts --config FILE (INI/TOML key = value using
// the long flag names, optionally under a [subcommand] section); flags given
// on the command line take precedence.

#include "promptlab/errors.hpp"
#include "promptlab/experiments.hpp"
#include "promptlab/weights_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using plab::Index;

constexpr int exit_pass = 0;
constexpr int exit_fail = 1;
constexpr int exit_usage = 2;

struct ModelFlags {
    std::string weights;
    Index d = 6;
    Index heads = 1;
    Index s = 0;
    Index d_ff = 0;
    Index layers = 1;
    double gain = 1.0;
    std::uint64_t model_seed = 0;

    void attach(CLI::App* app)
    {
        app->add_option("--weights", weights, "JSON weight file (overrides the random-model flags)")
            ->check(CLI::ExistingFile);
        app->add_option("--d", d, "token dimension of the random model")->check(CLI::PositiveNumber);
        app->add_option("--heads", heads, "attention heads")->check(CLI::PositiveNumber);
        app->add_option("--s", s, "head dimension (0: d / heads)")->check(CLI::NonNegativeNumber);
        app->add_option("--d-ff", d_ff, "MLP hidden width (0: 4 d)")->check(CLI::NonNegativeNumber);
        app->add_option("--layers", layers, "depth")->check(CLI::PositiveNumber);
        app->add_option("--gain", gain, "initialisation scale");
        app->add_option("--model-seed", model_seed, "seed for the random weights");
    }

    plab::ModelSource source() const
    {
        plab::ModelSource src;
        if (!weights.empty()) src.weights_path = weights;
        src.random.dims.d = d;
        src.random.dims.h = heads;
        src.random.dims.s = s;
        src.random.dims.s_prime = s;
        src.random.dims.d_ff = d_ff;
        src.random.layers = layers;
        src.random.gain = gain;
        src.random.seed = model_seed;
        return src;
    }
};

void emit(const std::string& text, const std::string& out)
{
    std::cout << text;
    if (!out.empty()) plab::write_text_file(out, text);
}

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help)
{
    CLI::App* sub = app.add_subcommand(name, help);
    // Consumed by with_config_defaults before parsing; registered for --help.
    sub->add_option("--config", "INI/TOML file of flag = value defaults");
    return sub;
}

bool given(const std::vector<std::string>& args, const std::string& flag)
{
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

// CLI11 only reads config files for the top-level app, so subcommand configs
// are expanded here: every key not already on the command line becomes a flag.
std::vector<std::string> with_config_defaults(std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) return args;
    const std::string sub = args.empty() ? "" : args.front();
    for (const auto& item : CLI::ConfigTOML().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue; // section markers
        if (!item.parents.empty() && item.parents.front() != sub) continue;
        const std::string flag = "--" + item.name;
        if (given(args, flag)) continue;
        if (item.inputs.size() == 1 && (item.inputs[0] == "true" || item.inputs[0] == "false")) {
            if (item.inputs[0] == "true") args.push_back(flag);
            continue;
        }
        args.push_back(flag);
        args.insert(args.end(), item.inputs.begin(), item.inputs.end());
    }
    return args;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"prompt-tuning capacity and inaccessibility lab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand all subcommand help");
    app.allow_windows_style_options(false);

    std::function<int()> action;

    // audit ----------------------------------------------------------------
    ModelFlags audit_model;
    plab::AuditConfig audit;
    std::string audit_out;
    std::string audit_save;
    auto* audit_cmd = subcommand(app, "audit", "analytic Lipschitz bounds vs sampled difference quotients");
    audit_model.attach(audit_cmd);
    audit_cmd->add_option("--radius", audit.r, "embedding radius r")->check(CLI::PositiveNumber);
    audit_cmd->add_option("--tokens", audit.tokens, "sequence length n")->check(CLI::PositiveNumber);
    audit_cmd->add_option("--samples", audit.samples, "sampled input pairs per scope")->check(CLI::PositiveNumber);
    audit_cmd->add_option("--seed", audit.seed, "master seed");
    audit_cmd->add_flag("--masked", audit.masked, "causal attention");
    audit_cmd->add_option("--out", audit_out, "also write the report here");
    audit_cmd->add_option("--save-weights", audit_save, "write the audited weights as JSON");
    audit_cmd->callback([&] {
        action = [&] {
            audit.model = audit_model.source();
            if (!audit_save.empty()) plab::save_weights(audit.model.materialize(), audit_save);
            const auto report = plab::run_lipschitz_audit(audit);
            emit(plab::render_audit(report), audit_out);
            return report.passed ? exit_pass : exit_fail;
        };
    });

    // capacity -------------------------------------------------------------
    ModelFlags sweep_model;
    plab::SweepConfig sweep;
    std::string sweep_norm = "frobenius";
    std::string sweep_out;
    std::string plot_dir;
    auto* capacity_cmd = subcommand(app, "capacity", "empirical prompt capacity sweep over (m_p, k)");
    sweep_model.attach(capacity_cmd);
    capacity_cmd->add_option("--m", sweep.m, "query tokens per pair")->check(CLI::PositiveNumber);
    capacity_cmd->add_option("--prompt-lengths", sweep.prompt_lengths, "m_p grid")->delimiter(',');
    capacity_cmd->add_option("--ks", sweep.ks, "k grid (pairs per task)")->delimiter(',');
    capacity_cmd->add_option("--radius", sweep.r, "sampling radius r")->check(CLI::PositiveNumber);
    capacity_cmd->add_option("--eps", sweep.eps, "accessibility tolerance")->check(CLI::PositiveNumber);
    capacity_cmd->add_option("--norm", sweep_norm, "l2 | linf | frobenius");
    capacity_cmd->add_flag("--masked", sweep.masked, "causal attention");
    capacity_cmd->add_flag("--planted", sweep.planted, "targets produced by a hidden prompt");
    capacity_cmd->add_option("--trials", sweep.trials, "tasks per cell")->check(CLI::PositiveNumber);
    capacity_cmd->add_option("--lr", sweep.tune.lr, "Adam step size");
    capacity_cmd->add_option("--iters", sweep.tune.iters, "steps per restart");
    capacity_cmd->add_option("--restarts", sweep.tune.restarts, "restarts per task");
    capacity_cmd->add_option("--init-scale", sweep.tune.init_scale, "prompt initialisation scale");
    capacity_cmd->add_option("--seed", sweep.seed, "master seed");
    capacity_cmd->add_option("--threads", sweep.threads, "concurrent trials (0: all cores)");
    capacity_cmd->add_option("--out", sweep_out, "CSV output path");
    capacity_cmd->add_option("--plot-dir", plot_dir, "directory for per-series plot data");
    capacity_cmd->callback([&] {
        action = [&] {
            sweep.model = sweep_model.source();
            sweep.norm = plab::parse_norm(sweep_norm);
            const auto rows = plab::run_capacity_sweep(sweep);
            emit(plab::sweep_csv(rows).str(), sweep_out);
            if (!plot_dir.empty()) plab::emit_plot_data(plab::sweep_plot_series(rows), plot_dir);
            return exit_pass;
        };
    });

    // meanfield ------------------------------------------------------------
    plab::MeanfieldConfig mf;
    std::string mf_out;
    auto* mf_cmd = subcommand(app, "meanfield", "pushforward of M(X) vs M(layer(X))");
    mf_cmd->add_option("--trials", mf.trials, "random (layer, X) draws")->check(CLI::PositiveNumber);
    mf_cmd->add_option("--max-d", mf.max_d, "largest token dimension")->check(CLI::PositiveNumber);
    mf_cmd->add_option("--max-tokens", mf.max_tokens, "largest sequence length")->check(CLI::PositiveNumber);
    mf_cmd->add_option("--heads", mf.heads, "attention heads")->check(CLI::PositiveNumber);
    mf_cmd->add_option("--radius", mf.r, "token radius")->check(CLI::PositiveNumber);
    mf_cmd->add_option("--gain", mf.gain, "initialisation scale");
    mf_cmd->add_option("--tolerance", mf.tolerance, "PASS threshold on the deviation");
    mf_cmd->add_option("--seed", mf.seed, "master seed");
    mf_cmd->add_option("--out", mf_out, "also write the report here");
    mf_cmd->callback([&] {
        action = [&] {
            const auto report = plab::run_meanfield_check(mf);
            emit(plab::render_meanfield(report, mf.tolerance), mf_out);
            return report.passed ? exit_pass : exit_fail;
        };
    });

    // certify --------------------------------------------------------------
    plab::CertifyConfig cert;
    std::string cert_weights;
    std::string cert_out;
    std::string cert_save;
    Index planted = 0;
    auto* cert_cmd = subcommand(app, "certify", "single-layer inaccessibility certificate");
    cert_cmd->add_option("--weights", cert_weights, "JSON weight file with one layer")->check(CLI::ExistingFile);
    cert_cmd->add_option("--d", cert.d, "token dimension")->check(CLI::PositiveNumber);
    cert_cmd->add_option("--heads", cert.heads, "attention heads")->check(CLI::PositiveNumber);
    cert_cmd->add_option("--d-ff", cert.d_ff, "MLP hidden width (0: 4 d)");
    cert_cmd->add_option("--gain", cert.gain, "initialisation scale");
    cert_cmd->add_option("--min-margin", cert.min_margin, "enforced 1 - |W1||W2|");
    cert_cmd->add_option("--input-radius", cert.input_radius, "radius for x_0 and the probes");
    cert_cmd->add_option("--target-scale", cert.target_scale, "|y'_i| before the MLP");
    cert_cmd->add_option("--seed", cert.seed, "master seed");
    cert_cmd->add_option("--prompt-lengths", cert.certificate.prompt_lengths, "m_p values tried")->delimiter(',');
    cert_cmd->add_option("--restarts", cert.certificate.tune.restarts, "restarts per m_p");
    cert_cmd->add_option("--iters", cert.certificate.tune.iters, "steps per restart");
    cert_cmd->add_option("--lr", cert.certificate.tune.lr, "Adam step size");
    cert_cmd->add_option("--threads", cert.certificate.tune.threads, "concurrent restarts (0: all cores)");
    cert_cmd->add_option("--tolerance", cert.certificate.tolerance, "absolute slack on the bound");
    cert_cmd->add_option("--planted", planted, "counter-case: targets from a planted prompt of this length")
        ->check(CLI::PositiveNumber);
    cert_cmd->add_option("--out", cert_out, "also write the certificate here");
    cert_cmd->add_option("--save-weights", cert_save, "write the certified weights as JSON");
    cert_cmd->callback([&] {
        action = [&] {
            if (!cert_weights.empty()) cert.weights_path = cert_weights;
            if (planted > 0) cert.planted_prompt_length = planted;
            const auto run = plab::run_single_layer_certificate(cert);
            if (!cert_save.empty()) plab::save_weights(run.weights, cert_save);
            emit(plab::render_certificate(run.certificate), cert_out);
            return run.certificate.passed ? exit_pass : exit_fail;
        };
    });

    // bounds ---------------------------------------------------------------
    plab::BoundsConfig bounds;
    std::string lip_weights;
    double lip_radius = 1.0;
    Index lip_tokens = 8;
    std::string bounds_out;
    auto* bounds_cmd = subcommand(app, "bounds", "capacity thresholds and log-proportion tables");
    bounds_cmd->add_option("--d", bounds.query.d, "token dimension")->required();
    bounds_cmd->add_option("--m", bounds.query.m, "query tokens per pair")->required();
    bounds_cmd->add_option("--mp", bounds.query.m_p, "prompt length")->required();
    bounds_cmd->add_option("--L", bounds.query.lipschitz, "Lipschitz constant");
    bounds_cmd->add_option("--r", bounds.query.r, "embedding radius")->required();
    bounds_cmd->add_option("--eps", bounds.query.eps, "accessibility tolerance")->required();
    bounds_cmd->add_option("--q", bounds.query.q, "Wasserstein order");
    bounds_cmd->add_option("--C", bounds.query.frostman_c, "Frostman constant");
    bounds_cmd->add_option("--ks", bounds.ks, "k grid (default 0 .. twice the threshold)")->delimiter(',');
    auto* lw = bounds_cmd->add_option("--lipschitz-weights", lip_weights, "take L from the audit bound of this model")
                   ->check(CLI::ExistingFile);
    bounds_cmd->add_option("--lipschitz-radius", lip_radius, "radius for --lipschitz-weights");
    bounds_cmd->add_option("--lipschitz-tokens", lip_tokens, "sequence length for --lipschitz-weights");
    bounds_cmd->get_option("--L")->excludes(lw);
    bounds_cmd->add_option("--out", bounds_out, "also write the report here");
    bounds_cmd->callback([&] {
        action = [&] {
            if (!lip_weights.empty()) {
                plab::AuditConfig ac;
                ac.model.weights_path = lip_weights;
                ac.r = lip_radius;
                ac.tokens = lip_tokens;
                bounds.lipschitz_from = ac;
            }
            emit(plab::render_bounds(plab::run_bounds_calculator(bounds)), bounds_out);
            return exit_pass;
        };
    });

    try {
        std::vector<std::string> args = with_config_defaults({argv + 1, argv + argc});
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        return action();
    } catch (const std::exception& e) {
        std::cerr << "lab: " << e.what() << "\n";
        return exit_usage;
    }
}
