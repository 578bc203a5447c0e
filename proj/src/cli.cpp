#include "spx/cli.hpp"

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "spx/errors.hpp"
#include "spx/io.hpp"

namespace spx {

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> model;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates;
    std::optional<int> n_max;
    std::optional<std::string> out;
    std::optional<int> scenario;
    std::optional<std::string> data;
    std::optional<std::string> format;
    std::optional<unsigned> threads;
    std::optional<std::string> design;
    std::optional<int> new_y;
    std::optional<int> new_n;
    std::optional<std::vector<double>> new_x;
    bool fast = false;
};

void add_common_options(CLI::App& sub, Overrides& o) {
    sub.add_option("--config", o.config, "JSON run configuration");
    sub.add_option("--model", o.model, "spx, rmap or independent");
    sub.add_option("--seed", o.seed, "master seed for all randomness");
    sub.add_option("--replicates", o.replicates, "simulation replicates");
    sub.add_option("--n-max", o.n_max, "target control size; Stage 1 becomes n_max / 2");
    sub.add_option("--out", o.out, "output directory");
    sub.add_option("--scenario", o.scenario, "simulation scenario 1..4 (0: scenario section as written)");
    sub.add_option("--data", o.data, "historical CSV (default: bundled case study)");
    sub.add_option("--format", o.format, "table, delimited or structured");
    sub.add_option("--threads", o.threads, "simulation worker threads (0: all cores)");
    sub.add_option("--design", o.design, "fixed or adaptive");
    sub.add_option("--new-y", o.new_y, "new-trial control responders");
    sub.add_option("--new-n", o.new_n, "new-trial control size");
    sub.add_option("--new-x", o.new_x, "new-trial raw covariates, comma separated")->delimiter(',');
    sub.add_flag("--fast", o.fast, "single short chain (2,000 + 2,000 iterations)");
}

RunConfig resolve_config(RunMode mode, const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    cfg.mode = mode;
    if (o.model) cfg.model = *o.model;
    if (o.seed) cfg.seed = *o.seed;
    if (o.replicates) cfg.replicates = *o.replicates;
    if (o.n_max) {
        const auto scaled = DesignConfig::with_max(*o.n_max);
        cfg.design.n_max = scaled.n_max;
        cfg.design.n_stage1 = scaled.n_stage1;
    }
    if (o.out) cfg.out = *o.out;
    if (o.scenario) cfg.scenario_id = *o.scenario;
    if (o.data) {
        if (!std::filesystem::exists(*o.data)) throw ConfigError("data file '" + *o.data + "' does not exist");
        cfg.data = *o.data;
    }
    if (o.format) cfg.format = *o.format;
    if (o.threads) cfg.threads = *o.threads;
    if (o.design) {
        if (*o.design == "fixed") {
            cfg.design_kind = DesignKind::fixed;
        } else if (*o.design == "adaptive") {
            cfg.design_kind = DesignKind::adaptive;
        } else {
            throw ConfigError("design must be 'fixed' or 'adaptive', got '" + *o.design + "'");
        }
    }
    if (o.new_y) cfg.new_trial.y = *o.new_y;
    if (o.new_n) cfg.new_trial.n = *o.new_n;
    if (o.new_x) cfg.new_trial.covariates = *o.new_x;
    if (o.fast) {
        const auto fast = McmcConfig::fast();
        cfg.mcmc.chains = fast.chains;
        cfg.mcmc.burn_in = fast.burn_in;
        cfg.mcmc.samples = fast.samples;
    }
    cfg.mcmc.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
    if (!cfg.data.empty()) return build_dataset(read_historical_table(cfg.data), cfg.new_trial);
    // The bundled case study's new trial: MTX-treated, mean age 53.
    NewTrialSpec spec = cfg.new_trial;
    if (!spec.covariates) spec.covariates = std::vector<double>{1.0, 53.0};
    return build_dataset(case_study_table(), spec);
}

void require_new_outcome(const Dataset& d) {
    if (!d.new_trial.has_outcome())
        throw DataError("new-trial control outcome missing: set run.new_trial.y/n or pass --new-y/--new-n");
    validate_trial(d.new_trial, true);
}

FitReport fit_report(const RunConfig& cfg, const Dataset& d, const PosteriorDraws& draws) {
    FitReport fit;
    fit.model = cfg.model;
    fit.y = d.new_trial.y;
    fit.n = d.new_trial.n;
    fit.summary = summarize(draws);
    fit.rb_weights = draws.rb_weights;
    fit.diagnostics = draws.diagnostics;
    return fit;
}

Report run_fit(const RunConfig& cfg, bool with_ess) {
    const Dataset d = load_dataset(cfg);
    require_new_outcome(d);
    const auto draws = fit_model(cfg.model_spec(), d, cfg.mcmc);
    Report report;
    report.title = std::string(with_ess ? "Effective sample size" : "Posterior of the new control rate") +
                   " (" + cfg.model + ")";
    report.fit = fit_report(cfg, d, draws);
    if (with_ess) report.fit->ess = ess_moment_match(draws, d.new_trial.n);
    return report;
}

Report run_design(const RunConfig& cfg) {
    const Dataset d = load_dataset(cfg);
    require_new_outcome(d);
    const auto model = cfg.model_spec();
    auto plan = run_adaptive_trial(d, model, cfg.design, cfg.mcmc);
    Report report;
    report.title = "Interim analysis (" + cfg.model + ")";
    report.fit = fit_report(cfg, d, plan.interim_draws);
    report.fit->ess = plan.ess;
    if (cfg.treatment) {
        auto final_analysis = complete_trial(d, *cfg.treatment, model, cfg.design, cfg.mcmc, derive_seed(cfg.seed, 1));
        final_analysis.control = {};
        report.fit->decision = std::move(final_analysis);
    }
    plan.interim_draws = {};
    report.fit->plan = std::move(plan);
    return report;
}

ScenarioConfig scenario_for(const RunConfig& cfg) {
    ScenarioConfig sc = cfg.scenario;
    if (cfg.scenario_id != 0) {
        const auto preset = ScenarioConfig::scenario(cfg.scenario_id);
        sc.covariates_predictive = preset.covariates_predictive;
        sc.hist_misleading = preset.hist_misleading;
        sc.true_new_rate = preset.true_new_rate;
    }
    return sc;
}

Report run_simulate(const RunConfig& cfg) {
    if (cfg.replicates == 0) throw ConfigError("run.replicates must be positive");
    const ScenarioConfig sc = scenario_for(cfg);
    RunOptions opts;
    opts.n_replicates = cfg.replicates;
    opts.master_seed = cfg.seed;
    opts.threads = cfg.threads;
    auto result = run_scenario(sc, cfg.model_spec(), cfg.design_kind, cfg.design, cfg.mcmc, opts);
    Report report;
    report.title = "Scenario " + std::to_string(sc.scenario_id()) + ", " + std::to_string(cfg.replicates) +
                   " replicates, n_max " + std::to_string(cfg.design.n_max);
    report.oc.push_back({cfg.model + " " + design_name(cfg.design_kind), result.oc, std::move(result.replicates)});
    return report;
}

Report run_sweep(const RunConfig& cfg) {
    const Dataset d = load_dataset(cfg);
    const auto rates = rate_grid(cfg.sweep.rate_lo, cfg.sweep.rate_hi, cfg.sweep.rate_step);
    Report report;
    report.title = "Observed-rate sweep at n = " + std::to_string(cfg.sweep.n) + " (" + cfg.model + ")";
    report.sweep = sweep_observed_rate(d, cfg.model_spec(), rates, cfg.sweep.n, cfg.design, cfg.mcmc, cfg.threads);
    return report;
}

void print_summary(std::ostream& out, const Report& report, const std::vector<std::filesystem::path>& written) {
    out << report.title << "\n\n";
    if (report.fit) write_fit_table(out, *report.fit);
    if (!report.oc.empty()) write_oc_table(out, report.oc);
    if (!report.sweep.empty()) write_sweep_table(out, report.sweep);
    out << '\n';
    for (const auto& p : written) out << "wrote " << p.string() << '\n';
}

int run_mode(RunMode mode, const Overrides& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(mode, o);
    Report report;
    switch (mode) {
    case RunMode::fit: report = run_fit(cfg, false); break;
    case RunMode::ess: report = run_fit(cfg, true); break;
    case RunMode::design: report = run_design(cfg); break;
    case RunMode::simulate: report = run_simulate(cfg); break;
    case RunMode::sweep: report = run_sweep(cfg); break;
    }
    const auto written = emit_report(report, parse_format(cfg.format), cfg.out, mode_name(mode));
    print_summary(out, report, written);
    return 0;
}

int fail(std::ostream& err, ErrorCategory category, const std::string& detail) {
    std::string line = detail;
    std::replace(line.begin(), line.end(), '\n', ' ');
    err << "error[" << category_name(category) << "]: " << line << '\n';
    return static_cast<int>(category);
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"SPx historical-control borrowing: fit, size and simulate two-stage trials", "spx"};
    app.require_subcommand(1);
    Overrides o;
    std::optional<RunMode> mode;
    for (const RunMode m : {RunMode::fit, RunMode::ess, RunMode::design, RunMode::simulate, RunMode::sweep}) {
        static const char* const kHelp[] = {
            "posterior of the new trial's control rate",
            "moment-matched effective sample size of the posterior",
            "interim analysis: Stage-2 size and, with a treatment arm, the decision rules",
            "replicated trial simulation in one scenario",
            "posterior model weights and Stage-2 size over a grid of observed rates",
        };
        auto* sub = app.add_subcommand(mode_name(m), kHelp[static_cast<int>(m)]);
        add_common_options(*sub, o);
        sub->callback([&mode, m] { mode = m; });
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return fail(err, ErrorCategory::usage, e.what());
    }

    try {
        return run_mode(*mode, o, out);
    } catch (const Error& e) {
        return fail(err, e.category(), e.what());
    } catch (const std::exception& e) {
        return fail(err, ErrorCategory::runtime, e.what());
    }
}

}  // namespace spx
