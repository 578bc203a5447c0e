#include "spx/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spx/errors.hpp"

namespace spx {

namespace {

using ojson = nlohmann::ordered_json;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
    return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw RuntimeError("failed writing '" + path.string() + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV

HistoricalTable parse_historical_csv(std::istream& in, const std::string& source) {
    HistoricalTable table;
    std::string line;
    int line_no = 0;
    std::size_t n_fields = 0;
    bool has_is_new = false;
    bool header_seen = false;

    auto fail = [&](const std::string& msg) -> DataError {
        return DataError(source + ": line " + std::to_string(line_no) + ": " + msg);
    };

    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const auto fields = split_fields(stripped);

        if (!header_seen) {
            header_seen = true;
            if (fields.size() < 3 || fields[0] != "trial_id" || fields[1] != "n" || fields[2] != "y")
                throw fail("header must start with trial_id,n,y");
            n_fields = fields.size();
            has_is_new = fields.back() == "is_new";
            const std::size_t cov_end = has_is_new ? fields.size() - 1 : fields.size();
            for (std::size_t k = 3; k < cov_end; ++k) {
                if (fields[k].empty()) throw fail("empty covariate name");
                table.covariate_names.push_back(fields[k]);
            }
            continue;
        }

        if (fields.size() != n_fields)
            throw fail("expected " + std::to_string(n_fields) + " fields, found " + std::to_string(fields.size()));

        RawTrial t;
        t.id = fields[0];
        if (t.id.empty()) throw fail("missing trial_id");

        bool is_new = false;
        if (has_is_new) {
            const auto& flag = fields.back();
            if (flag == "1") {
                is_new = true;
            } else if (!flag.empty() && flag != "0") {
                throw fail("is_new must be 0 or 1");
            }
        }

        const bool outcome_blank = fields[1].empty() && fields[2].empty();
        if (!(is_new && outcome_blank)) {
            if (fields[1].empty()) throw fail("missing n");
            if (fields[2].empty()) throw fail("missing y");
            if (!parse_number(fields[1], t.n)) throw fail("n is not an integer: '" + fields[1] + "'");
            if (!parse_number(fields[2], t.y)) throw fail("y is not an integer: '" + fields[2] + "'");
            if (t.n <= 0) throw fail("n must be positive");
            if (t.y < 0 || t.y > t.n)
                throw fail("y (" + std::to_string(t.y) + ") outside [0, n] with n = " + std::to_string(t.n));
        }

        for (std::size_t k = 0; k < table.covariate_names.size(); ++k) {
            const auto& cell = fields[3 + k];
            double v = 0.0;
            if (cell.empty()) throw fail("missing covariate '" + table.covariate_names[k] + "'");
            if (!parse_number(cell, v) || !std::isfinite(v))
                throw fail("covariate '" + table.covariate_names[k] + "' is not numeric: '" + cell + "'");
            t.covariates.push_back(v);
        }

        if (is_new) {
            if (table.new_trial) throw fail("more than one row flagged is_new=1");
            table.new_trial = std::move(t);
        } else {
            if (table.new_trial) throw fail("historical row after the is_new=1 row");
            table.trials.push_back(std::move(t));
        }
    }
    if (!header_seen) throw DataError(source + ": no header line");
    if (table.trials.empty()) throw DataError(source + ": no historical trials");
    return table;
}

HistoricalTable read_historical_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open historical data '" + path.string() + "'");
    return parse_historical_csv(in, path.string());
}

Dataset build_dataset(const HistoricalTable& table, const NewTrialSpec& spec) {
    std::vector<double> new_cov;
    if (spec.covariates) {
        new_cov = *spec.covariates;
    } else if (table.new_trial) {
        new_cov = table.new_trial->covariates;
    } else {
        throw DataError("new trial covariates are missing (no is_new row and none configured)");
    }
    if (new_cov.size() != table.covariate_names.size())
        throw DataError("new trial has " + std::to_string(new_cov.size()) + " covariates, expected " +
                        std::to_string(table.covariate_names.size()));

    std::vector<std::vector<double>> raw;
    raw.reserve(table.trials.size());
    for (const auto& t : table.trials) raw.push_back(t.covariates);
    auto std_cov = standardize_covariates(raw, new_cov);

    Dataset d;
    d.covariate_names = table.covariate_names;
    d.scaling = std::move(std_cov.scaling);
    d.historical.reserve(table.trials.size());
    for (std::size_t i = 0; i < table.trials.size(); ++i) {
        const auto& t = table.trials[i];
        d.historical.push_back({t.id, t.n, t.y, std::move(std_cov.historical[i])});
    }
    d.new_trial.id = table.new_trial ? table.new_trial->id : "new";
    d.new_trial.x = std::move(std_cov.new_trial);
    if (table.new_trial) {
        d.new_trial.n = table.new_trial->n;
        d.new_trial.y = table.new_trial->y;
    }
    if (spec.n) d.new_trial.n = *spec.n;
    if (spec.y) d.new_trial.y = *spec.y;
    validate_dataset(d, false);
    return d;
}

Dataset load_historical_csv(const std::filesystem::path& path, const NewTrialSpec& spec) {
    return build_dataset(read_historical_table(path), spec);
}

// ---------------------------------------------------------------------------
// Config

namespace {

// Typed, fail-closed view of one JSON object.
class Section {
public:
    Section(const ojson& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
    }

    void number(const char* key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) type_error(key, "a number");
            out = v->get<double>();
        }
    }
    void integer(const char* key, int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer()) type_error(key, "an integer");
            out = v->get<int>();
        }
    }
    void count(const char* key, std::size_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer() || v->get<long long>() < 0) type_error(key, "a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void count(const char* key, unsigned& out) {
        std::size_t tmp = out;
        count(key, tmp);
        out = static_cast<unsigned>(tmp);
    }
    void seed(const char* key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                type_error(key, "a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void boolean(const char* key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) type_error(key, "a boolean");
            out = v->get<bool>();
        }
    }
    void string(const char* key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) type_error(key, "a string");
            out = v->get<std::string>();
        }
    }
    const ojson* object(const char* key) {
        const auto* v = find(key);
        if (v && !v->is_object()) type_error(key, "an object");
        return v;
    }
    const ojson* raw(const char* key) { return find(key); }

    std::string path(const char* key) const { return name_ + "." + key; }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!known_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
        }
    }

private:
    const ojson* find(const char* key) {
        known_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    [[noreturn]] void type_error(const char* key, const char* what) const {
        throw ConfigError("'" + name_ + "." + key + "' must be " + what);
    }

    const ojson& j_;
    std::string name_;
    std::set<std::string> known_;
};

void read_pair(Section& s, const char* key, std::pair<double, double>& out) {
    if (const auto* v = s.raw(key)) {
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
            throw ConfigError("'" + s.path(key) + "' must be a two-number array");
        out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
}

void read_pair(Section& s, const char* key, std::pair<int, int>& out) {
    if (const auto* v = s.raw(key)) {
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer())
            throw ConfigError("'" + s.path(key) + "' must be a two-integer array");
        out = {(*v)[0].get<int>(), (*v)[1].get<int>()};
    }
}

IndependentPrior parse_independent_prior(const std::string& s) {
    if (s == "uniform") return IndependentPrior::uniform;
    if (s == "jeffreys") return IndependentPrior::jeffreys;
    throw ConfigError("independent prior must be 'uniform' or 'jeffreys', got '" + s + "'");
}

DesignKind parse_design_kind(const std::string& s) {
    if (s == "fixed") return DesignKind::fixed;
    if (s == "adaptive") return DesignKind::adaptive;
    throw ConfigError("design kind must be 'fixed' or 'adaptive', got '" + s + "'");
}

}  // namespace

RunMode parse_mode(const std::string& s) {
    if (s == "fit") return RunMode::fit;
    if (s == "ess") return RunMode::ess;
    if (s == "design") return RunMode::design;
    if (s == "simulate") return RunMode::simulate;
    if (s == "sweep") return RunMode::sweep;
    throw ConfigError("unknown mode '" + s + "'");
}

const char* mode_name(RunMode m) noexcept {
    switch (m) {
    case RunMode::fit: return "fit";
    case RunMode::ess: return "ess";
    case RunMode::design: return "design";
    case RunMode::simulate: return "simulate";
    case RunMode::sweep: return "sweep";
    }
    return "fit";
}

ModelSpec RunConfig::model_spec() const {
    if (model == "spx") return spx;
    if (model == "rmap") return rmap;
    if (model == "independent") return IndependentParams{independent_prior};
    throw ConfigError("model must be spx, rmap or independent, got '" + model + "'");
}

void RunConfig::validate() const {
    (void)model_spec();
    spx.validate();
    rmap.validate();
    mcmc.validate();
    design.validate();
    scenario.validate();
    if (scenario_id < 0 || scenario_id > 4) throw ConfigError("run.scenario must be 0 (custom) or 1..4");
    (void)parse_format(format);
    if (sweep.n <= 0) throw ConfigError("run.sweep.n must be positive");
    if (!(sweep.rate_step > 0.0 && sweep.rate_lo >= 0.0 && sweep.rate_hi <= 1.0 && sweep.rate_lo <= sweep.rate_hi))
        throw ConfigError("run.sweep: need 0 <= lo <= hi <= 1 and step > 0");
    if (treatment && (treatment->n_trt <= 0 || treatment->y_trt < 0 || treatment->y_trt > treatment->n_trt))
        throw ConfigError("run.treatment: need 0 <= y <= n and n > 0");
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    ojson root;
    try {
        root = ojson::parse(json_text);
    } catch (const ojson::parse_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    RunConfig cfg;
    Section top(root, "config");
    int version = 0;
    top.integer("schema_version", version);
    if (version != RunConfig::kSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                          std::to_string(RunConfig::kSchemaVersion) + ")");

    if (const auto* j = top.object("run")) {
        Section s(*j, "run");
        std::string mode = mode_name(cfg.mode);
        s.string("mode", mode);
        cfg.mode = parse_mode(mode);
        s.string("model", cfg.model);
        s.string("data", cfg.data);
        s.string("out", cfg.out);
        s.string("format", cfg.format);
        s.seed("seed", cfg.seed);
        s.integer("scenario", cfg.scenario_id);
        std::string design_kind = design_name(cfg.design_kind);
        s.string("design_kind", design_kind);
        cfg.design_kind = parse_design_kind(design_kind);
        s.count("replicates", cfg.replicates);
        s.count("threads", cfg.threads);
        std::string prior = cfg.independent_prior == IndependentPrior::uniform ? "uniform" : "jeffreys";
        s.string("independent_prior", prior);
        cfg.independent_prior = parse_independent_prior(prior);
        if (const auto* nt = s.object("new_trial")) {
            Section n(*nt, "run.new_trial");
            if (const auto* v = n.raw("y")) {
                if (!v->is_number_integer()) throw ConfigError("'run.new_trial.y' must be an integer");
                cfg.new_trial.y = v->get<int>();
            }
            if (const auto* v = n.raw("n")) {
                if (!v->is_number_integer()) throw ConfigError("'run.new_trial.n' must be an integer");
                cfg.new_trial.n = v->get<int>();
            }
            if (const auto* v = n.raw("covariates")) {
                if (!v->is_array()) throw ConfigError("'run.new_trial.covariates' must be an array");
                std::vector<double> cov;
                for (const auto& e : *v) {
                    if (!e.is_number()) throw ConfigError("'run.new_trial.covariates' must hold numbers");
                    cov.push_back(e.get<double>());
                }
                cfg.new_trial.covariates = std::move(cov);
            }
            n.finish();
        }
        if (const auto* tj = s.object("treatment")) {
            Section t(*tj, "run.treatment");
            TreatmentSummary tr;
            t.integer("y", tr.y_trt);
            t.integer("n", tr.n_trt);
            t.finish();
            cfg.treatment = tr;
        }
        if (const auto* sw = s.object("sweep")) {
            Section w(*sw, "run.sweep");
            w.number("rate_lo", cfg.sweep.rate_lo);
            w.number("rate_hi", cfg.sweep.rate_hi);
            w.number("rate_step", cfg.sweep.rate_step);
            w.integer("n", cfg.sweep.n);
            w.finish();
        }
        s.finish();
    }
    if (const auto* j = top.object("spx")) {
        Section s(*j, "spx");
        auto& hp = cfg.spx;
        s.number("p_hist", hp.p_hist);
        s.number("p_reg", hp.p_reg);
        s.number("p_ind", hp.p_ind);
        s.number("sigma_scale", hp.sigma_scale);
        s.number("tau_scale", hp.tau_scale);
        s.number("beta_scale", hp.beta_scale);
        s.number("c", hp.c);
        s.number("w_base", hp.w_base);
        s.number("w_bandwidth", hp.w_bandwidth);
        s.finish();
    }
    if (const auto* j = top.object("rmap")) {
        Section s(*j, "rmap");
        s.number("mix_weight", cfg.rmap.mix_weight);
        s.number("mu_prior_sd", cfg.rmap.mu_prior_sd);
        s.number("tau_prior_scale", cfg.rmap.tau_prior_scale);
        s.finish();
    }
    if (const auto* j = top.object("mcmc")) {
        Section s(*j, "mcmc");
        auto& mc = cfg.mcmc;
        s.integer("chains", mc.chains);
        s.integer("burn_in", mc.burn_in);
        s.integer("samples", mc.samples);
        s.integer("thin", mc.thin);
        s.boolean("adapt_burnin", mc.adapt_burnin);
        if (const auto* st = s.object("step_sizes")) {
            Section t(*st, "mcmc.step_sizes");
            auto& ss = mc.step_sizes;
            t.number("theta_trials", ss.theta_trials);
            t.number("beta", ss.beta);
            t.number("log_tau", ss.log_tau);
            t.number("log_sigma", ss.log_sigma);
            t.number("theta_hist", ss.theta_hist);
            t.number("theta_reg", ss.theta_reg);
            t.finish();
        }
        s.finish();
    }
    if (const auto* j = top.object("design")) {
        Section s(*j, "design");
        auto& dc = cfg.design;
        s.integer("n_max", dc.n_max);
        s.integer("n_stage1", dc.n_stage1);
        s.number("p_min", dc.p_min);
        s.number("p_max", dc.p_max);
        s.number("delta0", dc.delta0);
        s.number("q_positive", dc.q_positive);
        s.number("q_clinical", dc.q_clinical);
        s.finish();
    }
    if (const auto* j = top.object("scenario")) {
        Section s(*j, "scenario");
        auto& sc = cfg.scenario;
        s.integer("n_hist_trials", sc.n_hist_trials);
        read_pair(s, "hist_size_range", sc.hist_size_range);
        s.integer("n_covariates", sc.n_covariates);
        s.integer("used_covariates", sc.used_covariates);
        s.boolean("covariates_predictive", sc.covariates_predictive);
        s.boolean("hist_misleading", sc.hist_misleading);
        s.number("true_new_rate", sc.true_new_rate);
        s.number("true_effect", sc.true_effect);
        s.integer("n_trt", sc.n_trt);
        s.number("target_hist_mean", sc.target_hist_mean);
        read_pair(s, "target_hist_range", sc.target_hist_range);
        s.seed("hist_seed", sc.hist_seed);
        s.finish();
    }
    top.finish();

    if (!cfg.data.empty()) {
        std::filesystem::path p(cfg.data);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        if (!std::filesystem::exists(p)) throw ConfigError("data file '" + p.string() + "' does not exist");
        cfg.data = p.string();
    }
    cfg.mcmc.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path());
}

std::string config_to_json(const RunConfig& cfg) {
    ojson root;
    root["schema_version"] = RunConfig::kSchemaVersion;

    ojson run;
    run["mode"] = mode_name(cfg.mode);
    run["model"] = cfg.model;
    run["data"] = cfg.data;
    run["out"] = cfg.out;
    run["format"] = cfg.format;
    run["seed"] = cfg.seed;
    run["scenario"] = cfg.scenario_id;
    run["design_kind"] = design_name(cfg.design_kind);
    run["replicates"] = cfg.replicates;
    run["threads"] = cfg.threads;
    run["independent_prior"] = cfg.independent_prior == IndependentPrior::uniform ? "uniform" : "jeffreys";
    ojson nt = ojson::object();
    if (cfg.new_trial.y) nt["y"] = *cfg.new_trial.y;
    if (cfg.new_trial.n) nt["n"] = *cfg.new_trial.n;
    if (cfg.new_trial.covariates) nt["covariates"] = *cfg.new_trial.covariates;
    run["new_trial"] = nt;
    if (cfg.treatment) run["treatment"] = {{"y", cfg.treatment->y_trt}, {"n", cfg.treatment->n_trt}};
    run["sweep"] = {{"rate_lo", cfg.sweep.rate_lo},
                    {"rate_hi", cfg.sweep.rate_hi},
                    {"rate_step", cfg.sweep.rate_step},
                    {"n", cfg.sweep.n}};
    root["run"] = run;

    const auto& hp = cfg.spx;
    root["spx"] = {{"p_hist", hp.p_hist},         {"p_reg", hp.p_reg},       {"p_ind", hp.p_ind},
                   {"sigma_scale", hp.sigma_scale}, {"tau_scale", hp.tau_scale}, {"beta_scale", hp.beta_scale},
                   {"c", hp.c},                   {"w_base", hp.w_base},     {"w_bandwidth", hp.w_bandwidth}};
    root["rmap"] = {{"mix_weight", cfg.rmap.mix_weight},
                    {"mu_prior_sd", cfg.rmap.mu_prior_sd},
                    {"tau_prior_scale", cfg.rmap.tau_prior_scale}};
    const auto& mc = cfg.mcmc;
    const auto& ss = mc.step_sizes;
    root["mcmc"] = {{"chains", mc.chains},
                    {"burn_in", mc.burn_in},
                    {"samples", mc.samples},
                    {"thin", mc.thin},
                    {"adapt_burnin", mc.adapt_burnin},
                    {"step_sizes",
                     {{"theta_trials", ss.theta_trials},
                      {"beta", ss.beta},
                      {"log_tau", ss.log_tau},
                      {"log_sigma", ss.log_sigma},
                      {"theta_hist", ss.theta_hist},
                      {"theta_reg", ss.theta_reg}}}};
    const auto& dc = cfg.design;
    root["design"] = {{"n_max", dc.n_max},   {"n_stage1", dc.n_stage1},     {"p_min", dc.p_min},
                      {"p_max", dc.p_max},   {"delta0", dc.delta0},         {"q_positive", dc.q_positive},
                      {"q_clinical", dc.q_clinical}};
    const auto& sc = cfg.scenario;
    root["scenario"] = {{"n_hist_trials", sc.n_hist_trials},
                        {"hist_size_range", {sc.hist_size_range.first, sc.hist_size_range.second}},
                        {"n_covariates", sc.n_covariates},
                        {"used_covariates", sc.used_covariates},
                        {"covariates_predictive", sc.covariates_predictive},
                        {"hist_misleading", sc.hist_misleading},
                        {"true_new_rate", sc.true_new_rate},
                        {"true_effect", sc.true_effect},
                        {"n_trt", sc.n_trt},
                        {"target_hist_mean", sc.target_hist_mean},
                        {"target_hist_range", {sc.target_hist_range.first, sc.target_hist_range.second}},
                        {"hist_seed", sc.hist_seed}};
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Reports

ReportFormat parse_format(const std::string& s) {
    if (s == "table") return ReportFormat::table;
    if (s == "delimited") return ReportFormat::delimited;
    if (s == "structured") return ReportFormat::structured;
    throw ConfigError("format must be table, delimited or structured, got '" + s + "'");
}

namespace {

struct MetricRow {
    const char* table_name;
    const char* csv_name;
    int digits;
    double OperatingCharacteristics::*field;
};

constexpr int kCsvDigits = 6;

constexpr MetricRow kMetricRows[] = {
    {"Size", "size", 1, &OperatingCharacteristics::mean_size},
    {"RMSE", "rmse", 3, &OperatingCharacteristics::rmse},
    {"Coverage", "coverage", 1, &OperatingCharacteristics::coverage},
    {"Width", "width", 3, &OperatingCharacteristics::width},
    {"Type I", "type1", 1, &OperatingCharacteristics::type1},
    {"Power", "power", 1, &OperatingCharacteristics::power},
};

constexpr const char* kWeightNames[] = {"p_hist", "p_reg", "p_ind"};

void require_replicates(const std::vector<LabeledOc>& cols) {
    for (const auto& c : cols) {
        if (c.oc.n_replicates == 0) throw RuntimeError("no replicates for '" + c.label + "'");
    }
}

}  // namespace

void write_oc_table(std::ostream& out, const std::vector<LabeledOc>& cols) {
    require_replicates(cols);
    std::size_t width = 10;
    for (const auto& c : cols) width = std::max(width, c.label.size() + 2);
    out << std::left << std::setw(10) << "";
    for (const auto& c : cols) out << std::right << std::setw(static_cast<int>(width)) << c.label;
    out << '\n';
    for (const auto& row : kMetricRows) {
        out << std::left << std::setw(10) << row.table_name;
        for (const auto& c : cols)
            out << std::right << std::setw(static_cast<int>(width)) << fixed(c.oc.*row.field, row.digits);
        out << '\n';
    }
}

void write_oc_csv(std::ostream& out, const std::vector<LabeledOc>& cols) {
    require_replicates(cols);
    out << "metric";
    for (const auto& c : cols) out << ',' << c.label;
    out << '\n';
    for (const auto& row : kMetricRows) {
        out << row.csv_name;
        for (const auto& c : cols) out << ',' << fixed(c.oc.*row.field, kCsvDigits);
        out << '\n';
    }
    for (int k = 0; k < 3; ++k) {
        out << kWeightNames[k];
        for (const auto& c : cols) out << ',' << fixed(c.oc.mean_rb_weights[k], kCsvDigits);
        out << '\n';
    }
    out << "replicates";
    for (const auto& c : cols) out << ',' << c.oc.n_replicates;
    out << '\n';
}

std::vector<LabeledOc> read_oc_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("operating characteristics: empty input");
    auto header = split_fields(trim(line));
    if (header.empty() || header[0] != "metric") throw DataError("operating characteristics: bad header");
    std::vector<LabeledOc> cols(header.size() - 1);
    for (std::size_t k = 1; k < header.size(); ++k) cols[k - 1].label = header[k];
    while (std::getline(in, line)) {
        const auto fields = split_fields(trim(line));
        if (fields.size() != header.size()) throw DataError("operating characteristics: ragged row");
        const auto& name = fields[0];
        for (std::size_t k = 1; k < fields.size(); ++k) {
            auto& oc = cols[k - 1].oc;
            double v = 0.0;
            if (!parse_number(fields[k], v)) throw DataError("operating characteristics: bad value '" + fields[k] + "'");
            bool matched = false;
            for (const auto& row : kMetricRows) {
                if (name == row.csv_name) {
                    oc.*row.field = v;
                    matched = true;
                }
            }
            for (int w = 0; w < 3; ++w) {
                if (name == kWeightNames[w]) {
                    oc.mean_rb_weights[w] = v;
                    matched = true;
                }
            }
            if (name == "replicates") {
                oc.n_replicates = static_cast<std::size_t>(v);
                matched = true;
            }
            if (!matched) throw DataError("operating characteristics: unknown metric '" + name + "'");
        }
    }
    return cols;
}

void write_replicates_csv(std::ostream& out, const std::vector<LabeledOc>& cols) {
    out << "label,replicate,seed,stage1_y,control_n,control_y,ess,post_mean,lower,upper,covered,positive_null,"
           "clinical_alt,p_hist,p_reg,p_ind\n";
    for (const auto& c : cols) {
        for (const auto& r : c.replicates) {
            out << c.label << ',' << r.index << ',' << r.seed << ',' << r.stage1_y << ',' << r.control_n << ','
                << r.control_y << ',' << fixed(r.ess, 3) << ',' << fixed(r.post_mean, 6) << ',' << fixed(r.lower, 6)
                << ',' << fixed(r.upper, 6) << ',' << r.covered << ',' << r.positive_null << ',' << r.clinical_alt;
            for (double w : r.rb_weights) out << ',' << fixed(w, 6);
            out << '\n';
        }
    }
}

void write_sweep_table(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << std::right << std::setw(14) << "observed_rate" << std::setw(8) << "y" << std::setw(8) << "n"
        << std::setw(9) << "p_hist" << std::setw(9) << "p_reg" << std::setw(9) << "p_ind" << std::setw(10) << "ess"
        << std::setw(14) << "stage2_total" << '\n';
    for (const auto& r : rows) {
        out << std::setw(14) << fixed(r.observed_rate, 3) << std::setw(8) << r.y << std::setw(8) << r.n;
        for (double w : r.rb_weights) out << std::setw(9) << fixed(w, 3);
        out << std::setw(10) << fixed(r.ess, 1) << std::setw(14) << r.stage2_total << '\n';
    }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "observed_rate,p_hist,p_reg,p_ind,stage2_total,y,n,ess,stage2\n";
    for (const auto& r : rows) {
        out << fixed(r.observed_rate, 3);
        for (double w : r.rb_weights) out << ',' << fixed(w, kCsvDigits);
        out << ',' << r.stage2_total << ',' << r.y << ',' << r.n << ',' << fixed(r.ess, 3) << ',' << r.stage2 << '\n';
    }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != "observed_rate,p_hist,p_reg,p_ind,stage2_total,y,n,ess,stage2")
        throw DataError("sweep: bad header");
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto f = split_fields(trim(line));
        SweepRow r;
        const bool ok = f.size() == 9 && parse_number(f[0], r.observed_rate) && parse_number(f[1], r.rb_weights[0]) &&
                        parse_number(f[2], r.rb_weights[1]) && parse_number(f[3], r.rb_weights[2]) &&
                        parse_number(f[4], r.stage2_total) && parse_number(f[5], r.y) && parse_number(f[6], r.n) &&
                        parse_number(f[7], r.ess) && parse_number(f[8], r.stage2);
        if (!ok) throw DataError("sweep: malformed row '" + line + "'");
        rows.push_back(r);
    }
    return rows;
}

void write_fit_table(std::ostream& out, const FitReport& fit) {
    out << "model          " << fit.model << '\n';
    out << "new trial      " << fit.y << " / " << fit.n << '\n';
    out << "posterior mean " << fixed(fit.summary.mean, 3) << '\n';
    out << "95% interval   (" << fixed(fit.summary.lower, 3) << ", " << fixed(fit.summary.upper, 3) << ")\n";
    out << "p*_hist        " << fixed(fit.rb_weights[0], 3) << '\n';
    out << "p*_reg         " << fixed(fit.rb_weights[1], 3) << '\n';
    out << "p*_ind         " << fixed(fit.rb_weights[2], 3) << '\n';
    if (fit.ess) out << "n_eff          " << fixed(*fit.ess, 1) << '\n';
    if (fit.plan) {
        out << "stage-2 size   " << fit.plan->n_stage2 << '\n';
        out << "total control  " << fit.plan->total << '\n';
    }
    if (fit.decision) {
        out << "P(delta > 0)   " << fixed(fit.decision->prob_positive, 3)
            << (fit.decision->positive ? "  positive effect declared" : "") << '\n';
        out << "P(delta > d0)  " << fixed(fit.decision->prob_clinical, 3)
            << (fit.decision->clinical ? "  clinically significant effect declared" : "") << '\n';
    }
}

void write_fit_csv(std::ostream& out, const FitReport& fit) {
    out << "quantity,value\n";
    out << "model," << fit.model << '\n';
    out << "y," << fit.y << '\n';
    out << "n," << fit.n << '\n';
    out << "mean," << fixed(fit.summary.mean, 6) << '\n';
    out << "variance," << fixed(fit.summary.variance, 8) << '\n';
    out << "lower," << fixed(fit.summary.lower, 6) << '\n';
    out << "upper," << fixed(fit.summary.upper, 6) << '\n';
    out << "width," << fixed(fit.summary.width(), 6) << '\n';
    for (int k = 0; k < 3; ++k) out << kWeightNames[k] << ',' << fixed(fit.rb_weights[k], 6) << '\n';
    if (fit.ess) out << "n_eff," << fixed(*fit.ess, 3) << '\n';
    if (fit.plan) {
        out << "n_stage2," << fit.plan->n_stage2 << '\n';
        out << "total," << fit.plan->total << '\n';
    }
    if (fit.decision) {
        out << "prob_positive," << fixed(fit.decision->prob_positive, 6) << '\n';
        out << "prob_clinical," << fixed(fit.decision->prob_clinical, 6) << '\n';
        out << "positive," << fit.decision->positive << '\n';
        out << "clinical," << fit.decision->clinical << '\n';
    }
}

std::string report_to_json(const Report& report) {
    ojson root;
    root["title"] = report.title;
    if (!report.oc.empty()) {
        ojson cols = ojson::array();
        for (const auto& c : report.oc) {
            const auto& oc = c.oc;
            cols.push_back({{"label", c.label},
                            {"size", oc.mean_size},
                            {"rmse", oc.rmse},
                            {"coverage", oc.coverage},
                            {"width", oc.width},
                            {"type1", oc.type1},
                            {"power", oc.power},
                            {"mean_rb_weights", oc.mean_rb_weights},
                            {"replicates", oc.n_replicates}});
        }
        root["operating_characteristics"] = cols;
    }
    if (!report.sweep.empty()) {
        ojson rows = ojson::array();
        for (const auto& r : report.sweep) {
            rows.push_back({{"observed_rate", r.observed_rate},
                            {"y", r.y},
                            {"n", r.n},
                            {"rb_weights", r.rb_weights},
                            {"ess", r.ess},
                            {"stage2", r.stage2},
                            {"stage2_total", r.stage2_total}});
        }
        root["sweep"] = rows;
    }
    if (report.fit) {
        const auto& f = *report.fit;
        ojson fit = {{"model", f.model},
                     {"y", f.y},
                     {"n", f.n},
                     {"mean", f.summary.mean},
                     {"variance", f.summary.variance},
                     {"lower", f.summary.lower},
                     {"upper", f.summary.upper},
                     {"rb_weights", f.rb_weights}};
        if (f.ess) fit["n_eff"] = *f.ess;
        if (f.plan) {
            fit["n_stage2"] = f.plan->n_stage2;
            fit["total"] = f.plan->total;
        }
        if (f.decision) {
            fit["prob_positive"] = f.decision->prob_positive;
            fit["prob_clinical"] = f.decision->prob_clinical;
            fit["positive"] = f.decision->positive;
            fit["clinical"] = f.decision->clinical;
        }
        ojson diag = ojson::object();
        for (const auto& d : f.diagnostics) diag[d.block] = std::isnan(d.rate) ? ojson(nullptr) : ojson(d.rate);
        fit["acceptance"] = diag;
        root["fit"] = fit;
    }
    return root.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const Report& report, ReportFormat format,
                                               const std::filesystem::path& dir, const std::string& stem) {
    if (report.oc.empty() && report.sweep.empty() && !report.fit) throw RuntimeError("report is empty");
    require_replicates(report.oc);

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw RuntimeError("cannot create output directory '" + dir.string() + "': " + ec.message());

    std::vector<std::filesystem::path> written;
    auto write = [&](const std::string& name, auto&& body) {
        const auto path = dir / name;
        auto out = open_output(path);
        body(out);
        check_written(out, path);
        written.push_back(path);
    };

    switch (format) {
    case ReportFormat::table:
        write(stem + ".txt", [&](std::ostream& out) {
            if (!report.title.empty()) out << report.title << "\n\n";
            if (report.fit) write_fit_table(out, *report.fit);
            if (!report.oc.empty()) write_oc_table(out, report.oc);
            if (!report.sweep.empty()) write_sweep_table(out, report.sweep);
        });
        break;
    case ReportFormat::delimited: {
        if (report.fit) write(stem + "_summary.csv", [&](std::ostream& out) { write_fit_csv(out, *report.fit); });
        if (!report.oc.empty()) {
            write(stem + "_oc.csv", [&](std::ostream& out) { write_oc_csv(out, report.oc); });
            const bool any = std::any_of(report.oc.begin(), report.oc.end(),
                                         [](const LabeledOc& c) { return !c.replicates.empty(); });
            if (any) write(stem + "_replicates.csv", [&](std::ostream& out) { write_replicates_csv(out, report.oc); });
        }
        if (!report.sweep.empty())
            write(stem + "_sweep.csv", [&](std::ostream& out) { write_sweep_csv(out, report.sweep); });
        break;
    }
    case ReportFormat::structured:
        write(stem + ".json", [&](std::ostream& out) { out << report_to_json(report); });
        break;
    }
    return written;
}

}  // namespace spx
