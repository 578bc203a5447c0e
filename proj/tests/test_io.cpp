#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "spx/errors.hpp"
#include "spx/io.hpp"

using namespace spx;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("spx_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

HistoricalTable parse(const std::string& text) {
    std::istringstream in(text);
    return parse_historical_csv(in, "t.csv");
}

std::string data_error(const std::string& text) {
    try {
        parse(text);
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

RunConfig random_config(Rng& rng) {
    RunConfig cfg;
    const RunMode modes[] = {RunMode::fit, RunMode::ess, RunMode::design, RunMode::simulate, RunMode::sweep};
    cfg.mode = modes[rng.index(5)];
    const char* models[] = {"spx", "rmap", "independent"};
    cfg.model = models[rng.index(3)];
    const char* formats[] = {"table", "delimited", "structured"};
    cfg.format = formats[rng.index(3)];
    cfg.out = "out_" + std::to_string(rng.index(1000));
    cfg.seed = rng();
    cfg.scenario_id = static_cast<int>(rng.index(5));
    cfg.design_kind = rng.uniform() < 0.5 ? DesignKind::fixed : DesignKind::adaptive;
    cfg.replicates = 1 + rng.index(2000);
    cfg.threads = static_cast<unsigned>(rng.index(9));
    cfg.independent_prior = rng.uniform() < 0.5 ? IndependentPrior::uniform : IndependentPrior::jeffreys;
    if (rng.uniform() < 0.5) {
        cfg.new_trial.n = 1 + static_cast<int>(rng.index(300));
        cfg.new_trial.y = static_cast<int>(rng.index(static_cast<std::uint64_t>(*cfg.new_trial.n) + 1));
        cfg.new_trial.covariates = std::vector<double>{rng.normal(), 40.0 + 20.0 * rng.uniform()};
    }
    if (rng.uniform() < 0.5) cfg.treatment = TreatmentSummary{static_cast<int>(rng.index(50)), 50};
    cfg.sweep.rate_lo = 0.3 * rng.uniform();
    cfg.sweep.rate_hi = 0.5 + 0.5 * rng.uniform();
    cfg.sweep.rate_step = 0.001 + 0.1 * rng.uniform();
    cfg.sweep.n = 1 + static_cast<int>(rng.index(500));

    cfg.spx.p_hist = 0.5 * rng.uniform();
    cfg.spx.p_reg = 0.5 * rng.uniform();
    cfg.spx.p_ind = 1.0 - cfg.spx.p_hist - cfg.spx.p_reg;
    cfg.spx.sigma_scale = 0.001 + rng.uniform();
    cfg.spx.tau_scale = 0.1 + 5.0 * rng.uniform();
    cfg.spx.beta_scale = 0.1 + 5.0 * rng.uniform();
    cfg.spx.c = 0.001 + rng.uniform();
    cfg.spx.w_base = 0.01 + 0.98 * rng.uniform();
    cfg.spx.w_bandwidth = 0.001 + rng.uniform();
    cfg.rmap.mix_weight = rng.uniform();
    cfg.rmap.mu_prior_sd = 0.1 + 20.0 * rng.uniform();
    cfg.rmap.tau_prior_scale = 0.1 + 3.0 * rng.uniform();

    cfg.mcmc.chains = 1 + static_cast<int>(rng.index(8));
    cfg.mcmc.burn_in = static_cast<int>(rng.index(20000));
    cfg.mcmc.samples = 1 + static_cast<int>(rng.index(20000));
    cfg.mcmc.thin = 1 + static_cast<int>(rng.index(10));
    cfg.mcmc.adapt_burnin = rng.uniform() < 0.5;
    cfg.mcmc.step_sizes.theta_trials = 0.01 + rng.uniform();
    cfg.mcmc.step_sizes.beta = 0.01 + rng.uniform();
    cfg.mcmc.step_sizes.log_tau = 0.01 + rng.uniform();
    cfg.mcmc.step_sizes.log_sigma = 0.01 + rng.uniform();
    cfg.mcmc.step_sizes.theta_hist = 0.01 + rng.uniform();
    cfg.mcmc.step_sizes.theta_reg = 0.01 + rng.uniform();
    cfg.mcmc.seed = cfg.seed;

    cfg.design = DesignConfig::with_max(2 + static_cast<int>(rng.index(400)));
    cfg.design.p_min = rng.uniform();
    cfg.design.p_max = 1.0 + rng.uniform();
    cfg.design.delta0 = 0.5 * rng.uniform();
    cfg.design.q_positive = 0.01 + 0.2 * rng.uniform();
    cfg.design.q_clinical = 0.01 + 0.2 * rng.uniform();

    cfg.scenario.n_hist_trials = 1 + static_cast<int>(rng.index(40));
    cfg.scenario.hist_size_range = {10, 10 + static_cast<int>(rng.index(300))};
    cfg.scenario.n_covariates = 2 + static_cast<int>(rng.index(6));
    cfg.scenario.used_covariates = 1 + static_cast<int>(rng.index(2));
    cfg.scenario.covariates_predictive = rng.uniform() < 0.5;
    cfg.scenario.hist_misleading = rng.uniform() < 0.5;
    cfg.scenario.true_new_rate = 0.05 + 0.9 * rng.uniform();
    cfg.scenario.true_effect = 0.5 * rng.uniform();
    cfg.scenario.n_trt = static_cast<int>(rng.index(300));
    cfg.scenario.target_hist_mean = 0.3;
    cfg.scenario.target_hist_range = {0.28 * rng.uniform() + 0.01, 0.31 + 0.5 * rng.uniform()};
    cfg.scenario.hist_seed = rng();
    return cfg;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("bundled case-study fixture") {
    const auto table = case_study_table();
    REQUIRE(table.trials.size() == 11);
    CHECK(table.covariate_names == std::vector<std::string>{"mtx", "mean_age"});
    CHECK_FALSE(table.new_trial.has_value());
    const auto it = std::find_if(table.trials.begin(), table.trials.end(), [](const RawTrial& t) { return t.id == "DE019"; });
    REQUIRE(it != table.trials.end());
    CHECK(it->n == 200);
    CHECK(it->y == 48);
    CHECK(it->covariates == std::vector<double>{1.0, 56.1});
    int mtx = 0;
    for (const auto& t : table.trials) mtx += t.covariates[0] == 1.0;
    CHECK(mtx == 7);

    // Digest computed independently over the shipped CSV bytes.
    CHECK(fnv1a64(case_study_csv()) == 0x0e6e07a77d0236aaULL);
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

    std::ifstream in(fs::path(SPX_SOURCE_DIR) / "data" / "adalimumab.csv", std::ios::binary);
    REQUIRE(in);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == std::string(case_study_csv()));
}

TEST_CASE("historical CSV parsing") {
    const auto t = parse("# comment\n\ntrial_id,n,y,age,is_new\nA,10,3,50,0\nB,20,5,60,0\nnew,,,55,1\n");
    REQUIRE(t.trials.size() == 2);
    REQUIRE(t.new_trial.has_value());
    CHECK(t.new_trial->covariates == std::vector<double>{55.0});
    CHECK(t.trials[1].y == 5);

    CHECK(data_error("trial_id,n,y,age\nA,10,3\n").find("t.csv: line 2") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age\nA,10,3,50\nB,10,11,50\n").find("line 3") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age\nA,10,3,50\nB,0,0,50\n").find("line 3") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age\nA,10.5,3,50\n").find("line 2") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age\nA,10,3,abc\n").find("line 2") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age\nA,10,-1,50\n").find("line 2") != std::string::npos);
    CHECK_FALSE(data_error("n,y,trial_id\n").empty());
    CHECK_FALSE(data_error("trial_id,n,y\n").empty());
    CHECK_FALSE(data_error("").empty());
    CHECK(data_error("trial_id,n,y,age,is_new\nA,10,3,50,0\nX,,,1,1\nY,,,2,1\n").find("line 4") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age,is_new\nX,,,1,1\nA,10,3,50,0\n").find("line 3") != std::string::npos);
    CHECK(data_error("trial_id,n,y,age,is_new\nA,10,3,50,2\n").find("line 2") != std::string::npos);
    CHECK_THROWS_AS(read_historical_table("/nonexistent/spx.csv"), DataError);
}

TEST_CASE("dataset assembly and standardization") {
    const Dataset d = build_dataset(case_study_table(), {std::vector<double>{1.0, 53.0}, 22, 75});
    REQUIRE(d.historical.size() == 11);
    CHECK(d.new_trial.y == 22);
    CHECK(d.new_trial.n == 75);
    CHECK(d.dimension() == 3);
    double mean = 0.0;
    double ss = 0.0;
    for (const auto& t : d.historical) {
        CHECK(t.x[0] == 1.0);
        CHECK((t.x[1] == 0.0 || t.x[1] == 1.0));
        mean += t.x[2];
    }
    mean /= 11.0;
    for (const auto& t : d.historical) ss += (t.x[2] - mean) * (t.x[2] - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(ss / 10.0 - 1.0) < 1e-9);  // sample sd
    CHECK(d.new_trial.x[1] == 1.0);
    CHECK(d.new_trial.x[2] == doctest::Approx((53.0 - d.scaling.center[1]) / d.scaling.scale[1]));

    CHECK_THROWS_AS(build_dataset(case_study_table()), DataError);
    CHECK_THROWS_AS(build_dataset(case_study_table(), {std::vector<double>{1.0}, 22, 75}), DataError);
}

TEST_CASE("config round trip") {
    RunConfig defaults;
    const auto text = config_to_json(defaults);
    CHECK(config_to_json(parse_config(text)) == text);

    Rng rng(2024);
    for (int rep = 0; rep < 200; ++rep) {
        const RunConfig cfg = random_config(rng);
        const auto json = config_to_json(cfg);
        RunConfig back;
        REQUIRE_NOTHROW(back = parse_config(json));
        CHECK(config_to_json(back) == json);
    }
}

TEST_CASE("bundled case-study config loads") {
    const auto cfg = load_config(fs::path(SPX_SOURCE_DIR) / "configs" / "case_study.json");
    CHECK(cfg.new_trial.y == 22);
    CHECK(cfg.new_trial.n == 75);
    CHECK(fs::exists(cfg.data));
    CHECK(cfg.mcmc.seed == cfg.seed);
}

TEST_CASE("config errors") {
    CHECK(config_error(R"({"schema_version": 2})").find("schema_version") != std::string::npos);
    CHECK_FALSE(config_error(R"({})").empty());
    CHECK(config_error(R"({"schema_version": 1, "bogus": 1})").find("bogus") != std::string::npos);
    CHECK(config_error(R"({"schema_version": 1, "mcmc": {"chainz": 2}})").find("mcmc.chainz") != std::string::npos);
    CHECK(config_error(R"({"schema_version": 1, "mcmc": {"chains": "four"}})").find("chains") != std::string::npos);
    CHECK(config_error(R"({"schema_version": 1, "mcmc": {"chains": 0}})").find("chains") != std::string::npos);
    CHECK_FALSE(config_error(R"({"schema_version": 1, "spx": {"p_ind": 0.5}})").empty());
    CHECK_FALSE(config_error(R"({"schema_version": 1, "run": {"model": "bayes"}})").empty());
    CHECK_FALSE(config_error(R"({"schema_version": 1, "run": {"format": "xml"}})").empty());
    CHECK_FALSE(config_error(R"({"schema_version": 1, "run": {"seed": -3}})").empty());
    CHECK_FALSE(config_error(R"({"schema_version": 1, "run": {"data": "/nonexistent.csv"}})").empty());
    CHECK_FALSE(config_error(R"({"schema_version": 1,)").empty());
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    CHECK_THROWS_AS(parse_mode("plot"), ConfigError);
    CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("report writers") {
    TempDir dir("reports");
    OperatingCharacteristics oc;
    oc.mean_size = 150.5;
    oc.rmse = 0.0213;
    oc.coverage = 95.2;
    oc.width = 0.101;
    oc.type1 = 4.6;
    oc.power = 81.0;
    oc.mean_rb_weights = {0.1, 0.2, 0.7};
    oc.n_replicates = 2;
    ReplicateRecord r;
    r.control_n = 150;
    Report report;
    report.title = "t";
    report.oc.push_back({"spx adaptive", oc, {r, r}});
    report.oc.push_back({"independent fixed", oc, {r, r}});

    SUBCASE("operating characteristics CSV round trip") {
        std::stringstream ss;
        write_oc_csv(ss, report.oc);
        const auto back = read_oc_csv(ss);
        REQUIRE(back.size() == 2);
        CHECK(back[0].label == "spx adaptive");
        CHECK(back[1].oc.coverage == doctest::Approx(95.2));
        CHECK(back[0].oc.rmse == doctest::Approx(0.0213));
        CHECK(back[0].oc.mean_rb_weights[2] == doctest::Approx(0.7));
        CHECK(back[0].oc.n_replicates == 2);
    }
    SUBCASE("table layout") {
        std::stringstream ss;
        write_oc_table(ss, report.oc);
        const auto s = ss.str();
        for (const char* row : {"Size", "RMSE", "Coverage", "Width", "Type I", "Power"})
            CHECK(s.find(row) != std::string::npos);
    }
    SUBCASE("every format writes its files") {
        const auto t = emit_report(report, ReportFormat::table, dir.path, "sim");
        REQUIRE(t.size() == 1);
        CHECK(fs::exists(t[0]));
        const auto c = emit_report(report, ReportFormat::delimited, dir.path, "sim");
        CHECK(c.size() == 2);
        for (const auto& p : c) CHECK(fs::exists(p));
        const auto j = emit_report(report, ReportFormat::structured, dir.path / "nested", "sim");
        REQUIRE(j.size() == 1);
        std::ifstream in(j[0]);
        const auto parsed = nlohmann::json::parse(in);
        CHECK(parsed.at("operating_characteristics").size() == 2);
    }
    SUBCASE("sweep rows") {
        Report sweep;
        sweep.title = "sweep";
        for (int k = 0; k < 21; ++k) {
            SweepRow row;
            row.observed_rate = 0.10 + 0.02 * k;
            row.n = 75;
            row.y = static_cast<int>(std::lround(row.observed_rate * 75));
            row.rb_weights = {0.2, 0.3, 0.5};
            row.ess = 10.0 - k;
            row.stage2 = 40 + k;
            row.stage2_total = 115 + k;
            sweep.sweep.push_back(row);
        }
        const auto files = emit_report(sweep, ReportFormat::delimited, dir.path, "sweep");
        REQUIRE(files.size() == 1);
        std::ifstream in(files[0]);
        std::string header;
        std::getline(in, header);
        CHECK(header == "observed_rate,p_hist,p_reg,p_ind,stage2_total,y,n,ess,stage2");
        in.seekg(0);
        const auto back = read_sweep_csv(in);
        REQUIRE(back.size() == 21);
        CHECK(back[20].stage2_total == 135);
        CHECK(back[3].y == sweep.sweep[3].y);
    }
    SUBCASE("guards") {
        CHECK_THROWS_AS(emit_report(Report{}, ReportFormat::table, dir.path, "x"), RuntimeError);
        Report empty_col = report;
        empty_col.oc[0].oc.n_replicates = 0;
        CHECK_THROWS_AS(emit_report(empty_col, ReportFormat::table, dir.path, "x"), RuntimeError);
        const fs::path blocker = dir.path / "file";
        std::ofstream(blocker) << "x";
        try {
            emit_report(report, ReportFormat::table, blocker / "sub", "x");
            FAIL("expected a filesystem error");
        } catch (const RuntimeError& e) {
            CHECK(std::string(e.what()).find("file") != std::string::npos);
        }
    }
}

TEST_CASE("fit report JSON") {
    Report report;
    report.title = "fit";
    FitReport fit;
    fit.model = "spx";
    fit.y = 22;
    fit.n = 75;
    fit.summary = {0.3, 0.001, 0.25, 0.35};
    fit.rb_weights = {0.2, 0.1, 0.7};
    fit.ess = 12.5;
    report.fit = fit;
    const auto j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.at("fit").at("n_eff").get<double>() == 12.5);
    CHECK(j.at("fit").at("model").get<std::string>() == "spx");
}

}  // TEST_SUITE
