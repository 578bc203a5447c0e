#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "spx/design.hpp"
#include "spx/inference.hpp"

namespace spx {

struct ScenarioConfig {
    int n_hist_trials = 15;
    std::pair<int, int> hist_size_range{40, 200};
    int n_covariates = 6;
    int used_covariates = 2;
    bool covariates_predictive = true;
    bool hist_misleading = false;
    double true_new_rate = 0.20;
    double true_effect = 0.3;
    /// 0 means "same as the design's n_max".
    int n_trt = 0;
    double target_hist_mean = 0.23;
    std::pair<double, double> target_hist_range{0.12, 0.38};
    std::uint64_t hist_seed = 20240611;

    /// Scenario 1..4: (predictive, misleading) = (T,F), (T,T), (F,F), (F,T).
    static ScenarioConfig scenario(int id);
    int scenario_id() const noexcept;
    void validate() const;
};

/// Historical data plus the ground truth the replicates are scored against.
struct ScenarioData {
    Dataset dataset;                 // model-visible covariates, standardized
    std::vector<double> true_hist_rates;
    double true_new_rate = 0.0;
};

/// Deterministic in hist_seed. Trial sizes uniform on the size range; one
/// binary covariate followed by standard-normal ones; logit rates linear in
/// all covariates plus noise, affinely calibrated to the target mean and
/// span. With non-predictive covariates the covariate rows are permuted
/// across trials after the rates are fixed. The model sees the first
/// used_covariates columns.
ScenarioData gen_historical(const ScenarioConfig& sc);

/// y ~ Binomial(n, rate) with the given covariates attached.
TrialSummary gen_new_trial(double rate, int n, std::vector<double> x_new, std::uint64_t seed);

enum class DesignKind { fixed, adaptive };

const char* design_name(DesignKind k) noexcept;

struct ReplicateRecord {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    int stage1_y = 0;
    int control_n = 0;
    int control_y = 0;
    double ess = 0.0;
    double post_mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool covered = false;
    bool positive_null = false;      // positive-effect rule, true delta = 0
    bool clinical_alt = false;       // clinical rule, true delta = true_effect
    std::array<double, 3> rb_weights{0.0, 0.0, 0.0};
};

struct OperatingCharacteristics {
    double mean_size = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;  // percent
    double width = 0.0;
    double type1 = 0.0;     // percent
    double power = 0.0;     // percent
    std::array<double, 3> mean_rb_weights{0.0, 0.0, 0.0};
    std::size_t n_replicates = 0;
};

struct ScenarioResult {
    OperatingCharacteristics oc;
    std::vector<ReplicateRecord> replicates;
};

struct RunOptions {
    std::size_t n_replicates = 500;
    std::uint64_t master_seed = 1;
    /// 0 selects std::thread::hardware_concurrency().
    unsigned threads = 0;
};

/// Aggregates replicate records in index order. Throws on an empty set.
OperatingCharacteristics aggregate(const std::vector<ReplicateRecord>& records, double true_rate);

/// Replicated new-trial simulation on one fixed historical dataset. Replicate
/// i draws all of its randomness from derive_seed(master_seed, i), so the
/// result does not depend on thread count, and methods run with the same
/// master seed see the same simulated patients.
ScenarioResult run_scenario(const ScenarioConfig& sc, const ModelSpec& model, DesignKind design,
                            const DesignConfig& dc, const McmcConfig& mc, const RunOptions& opts);

/// Same, on pre-generated scenario data.
ScenarioResult run_scenario(const ScenarioData& data, const ScenarioConfig& sc, const ModelSpec& model,
                            DesignKind design, const DesignConfig& dc, const McmcConfig& mc, const RunOptions& opts);

struct SweepRow {
    double observed_rate = 0.0;
    int y = 0;
    int n = 0;
    std::array<double, 3> rb_weights{0.0, 0.0, 0.0};
    double ess = 0.0;
    int stage2 = 0;
    int stage2_total = 0;
};

/// Inclusive rate grid lo, lo + step, ..., hi.
std::vector<double> rate_grid(double lo, double hi, double step);

/// Refits the model for each hypothetical new-trial outcome y = round(rate * n)
/// and records the posterior model weights and the Stage-2 sizing.
std::vector<SweepRow> sweep_observed_rate(const Dataset& d, const ModelSpec& model, const std::vector<double>& rates,
                                          int n_fixed, const DesignConfig& dc, const McmcConfig& mc,
                                          unsigned threads = 0);

/// Runs fn(i) for i in [0, n) on a bounded pool of workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace spx
