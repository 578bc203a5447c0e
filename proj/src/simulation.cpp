#include "spx/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "spx/errors.hpp"

namespace spx {

namespace {

// Generating coefficients for (binary, c1, c2, ...). The first two carry most
// of the signal; the rest are predictive but hidden from the model.
constexpr double kBinaryShare = 0.6;
constexpr double kNoiseSd = 0.1;
const std::vector<double> kTrueCoefficients{1.0, 0.6, 0.2, 0.15, 0.1, 0.1};
// Permutation acceptance for non-predictive scenarios: the 95th percentile of
// |r| under independence with 15 trials.
constexpr double kMaxAbsCorrelation = 0.45;
constexpr int kMaxPermutations = 1000;

double true_coefficient(std::size_t j) {
    return j < kTrueCoefficients.size() ? kTrueCoefficients[j] : 0.1;
}

// Per-patient uniforms make the responder count y(p) = #{u < p} monotone in
// p, so the calibration below is a pair of one-dimensional searches.
struct PatientDraws {
    std::vector<double> sorted_u;

    int responders(double p) const {
        return static_cast<int>(std::lower_bound(sorted_u.begin(), sorted_u.end(), p) - sorted_u.begin());
    }
};

struct Calibration {
    double shift = 0.0;
    double slope = 1.0;
};

double observed_mean(const std::vector<PatientDraws>& patients, const std::vector<double>& eta, Calibration c) {
    double sum = 0.0;
    for (std::size_t h = 0; h < eta.size(); ++h) {
        const double p = inv_logit(c.shift + c.slope * eta[h]);
        sum += static_cast<double>(patients[h].responders(p)) / static_cast<double>(patients[h].sorted_u.size());
    }
    return sum / static_cast<double>(eta.size());
}

struct RateStats {
    double mean = 0.0;
    double lo = 1.0;
    double hi = 0.0;
};

RateStats observed_stats(const std::vector<PatientDraws>& patients, const std::vector<double>& eta, Calibration c) {
    RateStats st;
    for (std::size_t h = 0; h < eta.size(); ++h) {
        const double p = inv_logit(c.shift + c.slope * eta[h]);
        const double r =
            static_cast<double>(patients[h].responders(p)) / static_cast<double>(patients[h].sorted_u.size());
        st.mean += r;
        st.lo = std::min(st.lo, r);
        st.hi = std::max(st.hi, r);
    }
    st.mean /= static_cast<double>(eta.size());
    return st;
}

double solve_shift(const std::vector<PatientDraws>& patients, const std::vector<double>& eta, double slope,
                   double target_mean) {
    double lo = -10.0;
    double hi = 10.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (observed_mean(patients, eta, {mid, slope}) < target_mean ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Least-squares fit of the realized mean, minimum and maximum to their
// targets, with a steep penalty once the mean drifts more than kMeanSlack or
// an endpoint moves outward by more than kRangeSlack. The realized rates are
// step functions of (shift, slope), so this is a grid search: slope on a
// fixed grid, shift on a window around the value that hits the mean exactly,
// then a finer pass around the best cell.
Calibration calibrate(const std::vector<PatientDraws>& patients, const std::vector<double>& eta, double target_mean,
                      std::pair<double, double> target_range) {
    constexpr double kMeanSlack = 0.02;
    constexpr double kRangeSlack = 0.015;
    auto loss = [&](Calibration c) {
        const RateStats st = observed_stats(patients, eta, c);
        const double a = st.mean - target_mean;
        const double b = st.lo - target_range.first;
        const double d = st.hi - target_range.second;
        const double excess = std::max(0.0, std::abs(a) - kMeanSlack) + std::max(0.0, -b - kRangeSlack) +
                              std::max(0.0, d - kRangeSlack);
        return a * a + b * b + d * d + 1e3 * excess * excess;
    };
    Calibration best{solve_shift(patients, eta, 1.0, target_mean), 1.0};
    double best_loss = loss(best);
    auto scan = [&](double slope_lo, double slope_hi, int slope_steps, double window, int shift_steps) {
        for (int i = 0; i <= slope_steps; ++i) {
            const double slope = slope_lo + (slope_hi - slope_lo) * i / slope_steps;
            if (!(slope > 0.0)) continue;
            const double centre = solve_shift(patients, eta, slope, target_mean);
            for (int k = -shift_steps; k <= shift_steps; ++k) {
                const Calibration c{centre + window * k / shift_steps, slope};
                const double l = loss(c);
                if (l < best_loss) {
                    best_loss = l;
                    best = c;
                }
            }
        }
    };
    scan(0.0, 5.0, 250, 0.5, 50);
    const double step = 5.0 / 250;
    scan(best.slope - step, best.slope + step, 40, 0.05, 50);
    return best;
}

// Largest |Pearson r| between one of the first `used` covariate columns and
// the rates; constant columns count as uncorrelated.
double max_abs_correlation(const std::vector<std::vector<double>>& rows, std::size_t used,
                           const std::vector<double>& rates) {
    const double n = static_cast<double>(rates.size());
    const double rm = std::accumulate(rates.begin(), rates.end(), 0.0) / n;
    double out = 0.0;
    for (std::size_t j = 0; j < used; ++j) {
        double xm = 0.0;
        for (const auto& r : rows) xm += r[j];
        xm /= n;
        double sxy = 0.0;
        double sxx = 0.0;
        double syy = 0.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double dx = rows[i][j] - xm;
            const double dy = rates[i] - rm;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        if (sxx > 0.0 && syy > 0.0) out = std::max(out, std::abs(sxy) / std::sqrt(sxx * syy));
    }
    return out;
}

std::vector<double> column_means(const std::vector<std::vector<double>>& rows) {
    std::vector<double> mean(rows.front().size(), 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < r.size(); ++j) mean[j] += r[j];
    for (double& m : mean) m /= static_cast<double>(rows.size());
    return mean;
}

// Raw covariates for the new trial. With predictive covariates the visible
// continuous covariate is placed where the generating model yields the
// target rate, choosing the binary level that keeps it closest to the
// historical centre; hidden covariates sit at their historical mean.
std::vector<double> new_trial_covariates(const ScenarioConfig& sc, const std::vector<std::vector<double>>& raw,
                                         Calibration cal) {
    std::vector<double> x = column_means(raw);
    if (!sc.covariates_predictive || sc.used_covariates < 2) return x;

    const double target_linear = (logit(sc.true_new_rate) - cal.shift) / cal.slope;
    double best_gap = std::numeric_limits<double>::infinity();
    std::vector<double> best = x;
    for (double binary : {0.0, 1.0}) {
        std::vector<double> cand = x;
        cand[0] = binary;
        double rest = 0.0;
        for (std::size_t j = 0; j < cand.size(); ++j)
            if (j != 1) rest += true_coefficient(j) * cand[j];
        cand[1] = (target_linear - rest) / true_coefficient(1);
        const double gap = std::abs(cand[1] - x[1]);
        if (gap < best_gap) {
            best_gap = gap;
            best = cand;
        }
    }
    return best;
}

}  // namespace

ScenarioConfig ScenarioConfig::scenario(int id) {
    if (id < 1 || id > 4) throw ConfigError("scenario id must be 1..4");
    ScenarioConfig sc;
    sc.covariates_predictive = id <= 2;
    sc.hist_misleading = id % 2 == 0;
    sc.true_new_rate = sc.hist_misleading ? 0.45 : 0.20;
    return sc;
}

int ScenarioConfig::scenario_id() const noexcept {
    return (covariates_predictive ? 1 : 3) + (hist_misleading ? 1 : 0);
}

void ScenarioConfig::validate() const {
    if (n_hist_trials < 1) throw ConfigError("scenario: need at least one historical trial");
    if (!(hist_size_range.first >= 1 && hist_size_range.first <= hist_size_range.second))
        throw ConfigError("scenario: invalid historical size range");
    if (!(used_covariates >= 1 && used_covariates <= n_covariates))
        throw ConfigError("scenario: need 1 <= used_covariates <= n_covariates");
    if (!(true_new_rate > 0.0 && true_new_rate < 1.0)) throw ConfigError("scenario: true_new_rate must lie in (0, 1)");
    if (!(true_effect >= 0.0 && true_effect < 1.0)) throw ConfigError("scenario: true_effect must lie in [0, 1)");
    if (n_trt < 0) throw ConfigError("scenario: n_trt must be >= 0");
    const auto [lo, hi] = target_hist_range;
    if (!(lo > 0.0 && lo < target_hist_mean && target_hist_mean < hi && hi < 1.0))
        throw ConfigError("scenario: need 0 < range low < target mean < range high < 1");
}

ScenarioData gen_historical(const ScenarioConfig& sc) {
    sc.validate();
    Rng rng(sc.hist_seed);
    const auto h = static_cast<std::size_t>(sc.n_hist_trials);
    const auto p = static_cast<std::size_t>(sc.n_covariates);
    const auto [size_lo, size_hi] = sc.hist_size_range;

    std::vector<int> sizes(h);
    std::vector<std::vector<double>> raw(h, std::vector<double>(p));
    std::vector<double> eta(h);
    std::vector<PatientDraws> patients(h);
    for (std::size_t i = 0; i < h; ++i) {
        sizes[i] = size_lo + static_cast<int>(rng.index(static_cast<std::uint64_t>(size_hi - size_lo + 1)));
        raw[i][0] = rng.uniform() < kBinaryShare ? 1.0 : 0.0;
        for (std::size_t j = 1; j < p; ++j) raw[i][j] = rng.normal();
        eta[i] = kNoiseSd * rng.normal();
        for (std::size_t j = 0; j < p; ++j) eta[i] += true_coefficient(j) * raw[i][j];
        patients[i].sorted_u.resize(static_cast<std::size_t>(sizes[i]));
        for (double& u : patients[i].sorted_u) u = rng.uniform();
        std::sort(patients[i].sorted_u.begin(), patients[i].sorted_u.end());
    }

    const Calibration cal = calibrate(patients, eta, sc.target_hist_mean, sc.target_hist_range);

    ScenarioData out;
    out.true_new_rate = sc.true_new_rate;
    const auto x_new_raw = new_trial_covariates(sc, raw, cal);

    if (!sc.covariates_predictive) {
        // Redraw the permutation until no visible covariate tracks the
        // observed rates; keep the least correlated one if none qualifies.
        std::vector<double> observed(h);
        for (std::size_t i = 0; i < h; ++i) {
            const double p_true = inv_logit(cal.shift + cal.slope * eta[i]);
            observed[i] = static_cast<double>(patients[i].responders(p_true)) / sizes[i];
        }
        const auto used = static_cast<std::size_t>(sc.used_covariates);
        const auto original = raw;
        auto best = raw;
        double best_r = std::numeric_limits<double>::infinity();
        for (int attempt = 0; attempt < kMaxPermutations && best_r >= kMaxAbsCorrelation; ++attempt) {
            auto perm = original;
            for (std::size_t i = h; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
            const double r = max_abs_correlation(perm, used, observed);
            if (r < best_r) {
                best_r = r;
                best = std::move(perm);
            }
        }
        raw = std::move(best);
    }

    const auto used = static_cast<std::size_t>(sc.used_covariates);
    std::vector<std::vector<double>> visible(h);
    for (std::size_t i = 0; i < h; ++i) visible[i].assign(raw[i].begin(), raw[i].begin() + used);
    const std::vector<double> visible_new(x_new_raw.begin(), x_new_raw.begin() + used);
    auto std_cov = standardize_covariates(visible, visible_new);

    auto& ds = out.dataset;
    ds.covariate_names.push_back("binary");
    for (std::size_t j = 1; j < used; ++j) ds.covariate_names.push_back("c" + std::to_string(j));
    ds.scaling = std_cov.scaling;
    ds.historical.resize(h);
    out.true_hist_rates.resize(h);
    for (std::size_t i = 0; i < h; ++i) {
        const double rate = inv_logit(cal.shift + cal.slope * eta[i]);
        out.true_hist_rates[i] = rate;
        auto& t = ds.historical[i];
        t.id = "H" + std::to_string(i + 1);
        t.n = sizes[i];
        t.y = patients[i].responders(rate);
        t.x = std::move(std_cov.historical[i]);
    }
    ds.new_trial.id = "new";
    ds.new_trial.x = std::move(std_cov.new_trial);
    return out;
}

TrialSummary gen_new_trial(double rate, int n, std::vector<double> x_new, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("gen_new_trial: rate must lie in [0, 1]");
    if (n < 0) throw ConfigError("gen_new_trial: n must be >= 0");
    Rng rng(seed);
    TrialSummary t;
    t.id = "new";
    t.n = n;
    t.y = rng.binomial(n, rate);
    t.x = std::move(x_new);
    return t;
}

const char* design_name(DesignKind k) noexcept { return k == DesignKind::fixed ? "fixed" : "adaptive"; }

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const auto workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

OperatingCharacteristics aggregate(const std::vector<ReplicateRecord>& records, double true_rate) {
    if (records.empty()) throw RuntimeError("aggregate: no replicates");
    OperatingCharacteristics oc;
    const double n = static_cast<double>(records.size());
    double se = 0.0;
    for (const auto& r : records) {
        oc.mean_size += r.control_n;
        se += (r.post_mean - true_rate) * (r.post_mean - true_rate);
        oc.coverage += r.covered ? 1.0 : 0.0;
        oc.width += r.upper - r.lower;
        oc.type1 += r.positive_null ? 1.0 : 0.0;
        oc.power += r.clinical_alt ? 1.0 : 0.0;
        for (int k = 0; k < 3; ++k) oc.mean_rb_weights[k] += r.rb_weights[k];
    }
    oc.mean_size /= n;
    oc.rmse = std::sqrt(se / n);
    oc.coverage *= 100.0 / n;
    oc.width /= n;
    oc.type1 *= 100.0 / n;
    oc.power *= 100.0 / n;
    for (double& w : oc.mean_rb_weights) w /= n;
    oc.n_replicates = records.size();
    return oc;
}

ScenarioResult run_scenario(const ScenarioConfig& sc, const ModelSpec& model, DesignKind design,
                            const DesignConfig& dc, const McmcConfig& mc, const RunOptions& opts) {
    return run_scenario(gen_historical(sc), sc, model, design, dc, mc, opts);
}

ScenarioResult run_scenario(const ScenarioData& data, const ScenarioConfig& sc, const ModelSpec& model,
                            DesignKind design, const DesignConfig& dc, const McmcConfig& mc, const RunOptions& opts) {
    sc.validate();
    dc.validate();
    mc.validate();
    if (opts.n_replicates == 0) throw ConfigError("simulate: replicate count must be positive");

    const double rate = data.true_new_rate;
    const double alt_rate = std::min(1.0, rate + sc.true_effect);
    const int n_trt = sc.n_trt > 0 ? sc.n_trt : dc.n_max;
    const int max_patients = std::max(dc.n_max, dc.max_total());

    std::vector<ReplicateRecord> records(opts.n_replicates);
    auto run_one = [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(opts.master_seed, i);
        ReplicateRecord& rec = records[i];
        rec.index = i;
        rec.seed = seed;
        try {
            // Patient-level control outcomes, so both stages and both designs
            // read prefixes of the same sequence.
            Rng patients(derive_seed(seed, 1));
            std::vector<int> cum(static_cast<std::size_t>(max_patients) + 1, 0);
            for (int k = 0; k < max_patients; ++k)
                cum[static_cast<std::size_t>(k) + 1] = cum[static_cast<std::size_t>(k)] + (patients.uniform() < rate);

            Dataset d = data.dataset;
            int n_ctl = dc.n_max;
            if (design == DesignKind::adaptive) {
                d.new_trial.n = dc.n_stage1;
                d.new_trial.y = cum[static_cast<std::size_t>(dc.n_stage1)];
                rec.stage1_y = d.new_trial.y;
                McmcConfig interim_mc = mc;
                interim_mc.seed = derive_seed(seed, 2);
                const auto plan = run_adaptive_trial(d, model, dc, interim_mc);
                rec.ess = plan.ess;
                n_ctl = plan.total;
            }
            d.new_trial.n = n_ctl;
            d.new_trial.y = cum[static_cast<std::size_t>(n_ctl)];
            rec.control_n = n_ctl;
            rec.control_y = d.new_trial.y;

            McmcConfig final_mc = mc;
            final_mc.seed = derive_seed(seed, 3);
            const auto control = fit_model(model, d, final_mc);
            const auto summary = summarize(control);
            rec.post_mean = summary.mean;
            rec.lower = summary.lower;
            rec.upper = summary.upper;
            rec.covered = summary.lower <= rate && rate <= summary.upper;
            rec.rb_weights = control.rb_weights;
            if (design == DesignKind::fixed) rec.ess = ess_moment_match(control, n_ctl);

            Rng trt(derive_seed(seed, 4));
            const TreatmentSummary null_arm{trt.binomial(n_trt, rate), n_trt};
            const TreatmentSummary alt_arm{trt.binomial(n_trt, alt_rate), n_trt};
            const std::size_t n_draws = control.psi_new.size();
            rec.positive_null = decide(effect_draws(control, null_arm, n_draws, derive_seed(seed, 5)), 0.0,
                                       dc.q_positive);
            rec.clinical_alt = decide(effect_draws(control, alt_arm, n_draws, derive_seed(seed, 6)), dc.delta0,
                                      dc.q_clinical);
        } catch (const std::exception& e) {
            throw RuntimeError("replicate " + std::to_string(i) + " (seed " + std::to_string(seed) +
                               ") failed: " + e.what());
        }
    };
    parallel_for(opts.n_replicates, opts.threads, run_one);

    ScenarioResult out;
    out.oc = aggregate(records, rate);
    out.replicates = std::move(records);
    return out;
}

std::vector<double> rate_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("rate grid: need step > 0 and hi >= lo");
    const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
    std::vector<double> grid(count);
    for (std::size_t k = 0; k < count; ++k) grid[k] = lo + step * static_cast<double>(k);
    return grid;
}

std::vector<SweepRow> sweep_observed_rate(const Dataset& d, const ModelSpec& model, const std::vector<double>& rates,
                                          int n_fixed, const DesignConfig& dc, const McmcConfig& mc,
                                          unsigned threads) {
    if (n_fixed <= 0) throw ConfigError("sweep: n must be positive");
    DesignConfig design = dc;
    design.n_stage1 = n_fixed;
    design.validate();
    std::vector<SweepRow> rows(rates.size());
    parallel_for(rates.size(), threads, [&](std::size_t k) {
        const double r = rates[k];
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep: rates must lie in [0, 1]");
        Dataset local = d;
        local.new_trial.n = n_fixed;
        local.new_trial.y = static_cast<int>(std::lround(r * n_fixed));
        const auto draws = fit_model(model, local, mc);
        SweepRow& row = rows[k];
        row.observed_rate = r;
        row.y = local.new_trial.y;
        row.n = n_fixed;
        row.rb_weights = draws.rb_weights;
        row.ess = ess_moment_match(draws, n_fixed);
        row.stage2 = stage2_size(row.ess, design);
        row.stage2_total = n_fixed + row.stage2;
    });
    return rows;
}

}  // namespace spx
