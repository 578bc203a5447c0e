#include "spx/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spx/errors.hpp"

namespace spx {

DesignConfig DesignConfig::with_max(int n_max) {
    DesignConfig dc;
    dc.n_max = n_max;
    dc.n_stage1 = n_max / 2;
    return dc;
}

void DesignConfig::validate() const {
    if (!(n_stage1 > 0 && n_stage1 <= n_max)) throw ConfigError("design: need 0 < n_stage1 <= n_max");
    if (!(p_min >= 0.0 && p_min <= 1.0)) throw ConfigError("design: p_min must lie in [0, 1]");
    if (!(p_max >= 1.0 && std::isfinite(p_max))) throw ConfigError("design: p_max must be finite and >= 1");
    if (!(delta0 >= 0.0 && delta0 < 1.0)) throw ConfigError("design: delta0 must lie in [0, 1)");
    for (double q : {q_positive, q_clinical}) {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("design: thresholds must lie in (0, 1)");
    }
}

int DesignConfig::min_total() const { return static_cast<int>(std::ceil(p_min * n_max - 1e-9)); }
int DesignConfig::max_total() const { return static_cast<int>(std::floor(p_max * n_max + 1e-9)); }

double ess_moment_match(std::span<const double> psi_draws, int n_current) {
    if (psi_draws.empty()) throw RuntimeError("ess: no posterior draws");
    const double n = static_cast<double>(psi_draws.size());
    const double mean = std::accumulate(psi_draws.begin(), psi_draws.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : psi_draws) ss += (v - mean) * (v - mean);
    const double var = ss / n;
    if (!(var > 0.0)) throw RuntimeError("ess: posterior draws have zero variance");
    const double parameter_sum = mean * (1.0 - mean) / var - 1.0;
    return parameter_sum - n_current;
}

int stage2_size(double ess, const DesignConfig& dc) {
    const int lo = dc.min_total();
    const int hi = dc.max_total();
    // NaN carries no information about borrowing: plan the full size.
    const double raw_total = std::isnan(ess) ? dc.n_max : dc.n_max - std::round(ess);
    const int total = static_cast<int>(std::clamp(raw_total, static_cast<double>(lo), static_cast<double>(hi)));
    return std::max(0, total - dc.n_stage1);
}

std::pair<double, double> treatment_posterior(const TreatmentSummary& t) {
    if (t.y_trt < 0 || t.y_trt > t.n_trt) throw DataError("treatment arm: responders outside [0, n]");
    return {0.5 + t.y_trt, 0.5 + t.n_trt - t.y_trt};
}

std::vector<double> effect_draws(const PosteriorDraws& control, const TreatmentSummary& t, std::size_t n_draws,
                                 std::uint64_t seed) {
    const auto& ctl = control.psi_new;
    if (ctl.empty()) throw RuntimeError("effect_draws: no control draws");
    const auto [a, b] = treatment_posterior(t);
    Rng trt_rng(derive_seed(seed, 0));
    Rng pick_rng(derive_seed(seed, 1));
    const bool paired = n_draws == ctl.size();
    std::vector<double> delta(n_draws);
    for (std::size_t i = 0; i < n_draws; ++i) {
        const double trt = inv_logit(trt_rng.logit_beta(a, b));
        const double c = paired ? ctl[i] : ctl[pick_rng.index(ctl.size())];
        delta[i] = trt - c;
    }
    return delta;
}

double exceedance(std::span<const double> draws, double margin) {
    if (draws.empty()) throw RuntimeError("decision: no draws");
    const auto count = std::count_if(draws.begin(), draws.end(), [&](double v) { return v > margin; });
    return static_cast<double>(count) / static_cast<double>(draws.size());
}

bool decide(std::span<const double> delta_draws, double margin, double q) {
    if (delta_draws.empty()) throw RuntimeError("decision: no draws");
    const auto count = std::count_if(delta_draws.begin(), delta_draws.end(), [&](double v) { return v > margin; });
    const double n = static_cast<double>(delta_draws.size());
    // Inclusive boundary; the slack absorbs rounding in (1 - q) * n.
    return static_cast<double>(count) >= (1.0 - q) * n - 1e-9 * n;
}

InterimPlan run_adaptive_trial(const Dataset& interim, const ModelSpec& model, const DesignConfig& dc,
                               const McmcConfig& mc) {
    dc.validate();
    InterimPlan plan;
    plan.interim_draws = fit_model(model, interim, mc);
    plan.ess = ess_moment_match(plan.interim_draws, interim.new_trial.n);
    plan.n_stage2 = stage2_size(plan.ess, dc);
    plan.total = interim.new_trial.n + plan.n_stage2;
    return plan;
}

FinalAnalysis complete_trial(const Dataset& full, const TreatmentSummary& treatment, const ModelSpec& model,
                             const DesignConfig& dc, const McmcConfig& mc, std::uint64_t seed) {
    dc.validate();
    FinalAnalysis out;
    out.control = fit_model(model, full, mc);
    out.summary = summarize(out.control);
    const auto delta = effect_draws(out.control, treatment, out.control.psi_new.size(), seed);
    out.prob_positive = exceedance(delta, 0.0);
    out.prob_clinical = exceedance(delta, dc.delta0);
    out.positive = decide(delta, 0.0, dc.q_positive);
    out.clinical = decide(delta, dc.delta0, dc.q_clinical);
    return out;
}

}  // namespace spx
