#include "spx/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "spx/errors.hpp"

namespace spx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLikelihoodGuard = 1e-12;

// log(inv_logit(t)) without forming the rate.
double log_sigmoid(double t) noexcept {
    return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
}

}  // namespace

const char* category_name(ErrorCategory c) noexcept {
    switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::runtime: return "runtime";
    }
    return "runtime";
}

const char* expert_name(Expert e) noexcept {
    switch (e) {
    case Expert::hist: return "hist";
    case Expert::reg: return "reg";
    case Expert::ind: return "ind";
    }
    return "ind";
}

void validate_trial(const TrialSummary& t, bool require_outcome) {
    const std::string who = t.id.empty() ? std::string("trial") : "trial '" + t.id + "'";
    if (t.n < 0) throw DataError(who + ": negative size");
    if (require_outcome && t.n == 0) throw DataError(who + ": outcome required but n is 0");
    if (t.y < 0 || t.y > t.n) throw DataError(who + ": responders outside [0, n]");
    if (t.x.empty()) throw DataError(who + ": empty covariate vector");
    if (t.x[0] != 1.0) throw DataError(who + ": covariate vector must start with intercept 1");
    for (double v : t.x) {
        if (!std::isfinite(v)) throw DataError(who + ": non-finite covariate");
    }
}

void validate_dataset(const Dataset& d, bool require_new_outcome) {
    if (d.historical.empty()) throw DataError("dataset has no historical trials");
    const std::size_t dim = d.new_trial.x.size();
    for (const auto& t : d.historical) {
        validate_trial(t, true);
        if (t.x.size() != dim) throw DataError("trial '" + t.id + "': covariate dimension mismatch");
    }
    validate_trial(d.new_trial, require_new_outcome);
}

StandardizedCovariates standardize_covariates(const std::vector<std::vector<double>>& raw_historical,
                                              const std::vector<double>& raw_new) {
    const std::size_t p = raw_new.size();
    const std::size_t h = raw_historical.size();
    StandardizedCovariates out;
    out.scaling.center.assign(p, 0.0);
    out.scaling.scale.assign(p, 1.0);
    out.scaling.binary.assign(p, false);
    for (std::size_t j = 0; j < p; ++j) {
        bool binary = true;
        double sum = 0.0;
        for (const auto& row : raw_historical) {
            if (row.size() != p) throw DataError("covariate rows have inconsistent lengths");
            binary = binary && (row[j] == 0.0 || row[j] == 1.0);
            sum += row[j];
        }
        out.scaling.binary[j] = binary;
        if (binary || h < 2) continue;
        const double mean = sum / static_cast<double>(h);
        double ss = 0.0;
        for (const auto& row : raw_historical) ss += (row[j] - mean) * (row[j] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(h - 1));
        out.scaling.center[j] = mean;
        out.scaling.scale[j] = sd > 0.0 ? sd : 1.0;
    }
    auto transform = [&](const std::vector<double>& row) {
        std::vector<double> x(p + 1);
        x[0] = 1.0;
        for (std::size_t j = 0; j < p; ++j)
            x[j + 1] = (row[j] - out.scaling.center[j]) / out.scaling.scale[j];
        return x;
    };
    out.historical.reserve(h);
    for (const auto& row : raw_historical) out.historical.push_back(transform(row));
    out.new_trial = transform(raw_new);
    return out;
}

void SpxHyperParams::validate() const {
    for (double p : {p_hist, p_reg, p_ind}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("spx: model probabilities must lie in [0, 1]");
    }
    if (std::abs(p_hist + p_reg + p_ind - 1.0) > 1e-9)
        throw ConfigError("spx: p_hist + p_reg + p_ind must equal 1");
    if (!(sigma_scale > 0.0 && tau_scale > 0.0 && beta_scale > 0.0))
        throw ConfigError("spx: prior scales must be positive");
    if (!(c > 0.0)) throw ConfigError("spx: c must be positive");
    if (!(w_base > 0.0 && w_base < 1.0)) throw ConfigError("spx: w_base must lie in (0, 1)");
    if (!(w_bandwidth > 0.0)) throw ConfigError("spx: w_bandwidth must be positive");
}

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument outside (0, 1)");
    return std::log(p / (1.0 - p));
}

double inv_logit(double t) noexcept {
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    double v;
    if (t >= 0.0) {
        v = 1.0 / (1.0 + std::exp(-t));
    } else {
        const double e = std::exp(t);
        v = e / (1.0 + e);
    }
    return std::clamp(v, lo, hi);
}

double likelihood_rate(double t) noexcept {
    return std::clamp(inv_logit(t), kLikelihoodGuard, 1.0 - kLikelihoodGuard);
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

namespace density {

double log_binomial_pmf(int y, int n, double p) noexcept {
    double v = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
    if (y > 0) v += y * std::log(p);
    if (n - y > 0) v += (n - y) * std::log1p(-p);
    return v;
}

double log_binomial_logit(int y, int n, double theta) noexcept {
    return log_binomial_pmf(y, n, likelihood_rate(theta));
}

double log_normal(double x, double mean, double sd) noexcept {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_cauchy(double x, double scale) noexcept {
    const double z = x / scale;
    return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

double log_half_cauchy(double x, double scale) noexcept {
    if (!(x > 0.0)) return kNegInf;
    return std::log(2.0) + log_cauchy(x, scale);
}

double log_beta_on_logit(double t, double a, double b) noexcept {
    const double log_beta_fn = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    return a * log_sigmoid(t) + b * log_sigmoid(-t) - log_beta_fn;
}

double log_logistic(double t) noexcept { return log_sigmoid(t) + log_sigmoid(-t); }

}  // namespace density

void borrow_weights_from_predictors(std::span<const double> eta, double w_base, double w_bandwidth,
                                    std::vector<double>& w_out) {
    const std::size_t h = eta.size() - 1;
    w_out.resize(h);
    const double pi_new = inv_logit(eta[h]);
    const double log_base = std::log(w_base) / w_bandwidth;
    double max_log = kNegInf;
    for (std::size_t i = 0; i < h; ++i) {
        w_out[i] = std::abs(inv_logit(eta[i]) - pi_new) * log_base;
        max_log = std::max(max_log, w_out[i]);
    }
    double total = 0.0;
    for (double& v : w_out) {
        v = std::exp(v - max_log);
        total += v;
    }
    for (double& v : w_out) v /= total;
}

BorrowWeights borrow_weights(std::span<const double> beta, const Dataset& d, const SpxHyperParams& hp) {
    const std::size_t h = d.num_historical();
    std::vector<double> eta(h + 1);
    for (std::size_t i = 0; i < h; ++i) eta[i] = dot(beta, d.historical[i].x);
    eta[h] = dot(beta, d.new_trial.x);

    BorrowWeights out;
    borrow_weights_from_predictors(eta, hp.w_base, hp.w_bandwidth, out.w);
    out.pi_tilde.resize(h + 1);
    std::transform(eta.begin(), eta.end(), out.pi_tilde.begin(), inv_logit);
    return out;
}

double weighted_mean(const BorrowWeights& weights, std::span<const double> theta_trials) {
    return dot(weights.w, theta_trials);
}

double log_joint(const ParameterState& s, const Dataset& d, const SpxHyperParams& hp, Likelihood lik) {
    if (!(s.tau > 0.0) || !(s.sigma > 0.0)) return kNegInf;
    const bool with_lik = lik == Likelihood::full;
    const std::size_t h = d.num_historical();

    double lp = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
        const auto& t = d.historical[i];
        if (with_lik) lp += density::log_binomial_logit(t.y, t.n, s.theta_trials[i]);
        lp += density::log_normal(s.theta_trials[i], dot(s.beta, t.x), s.tau);
    }

    const auto weights = borrow_weights(s.beta, d, hp);
    lp += density::log_normal(s.theta_hist, weighted_mean(weights, s.theta_trials), s.sigma);
    lp += density::log_normal(s.theta_reg, dot(s.beta, d.new_trial.x), std::sqrt(hp.c) * s.tau);
    lp += density::log_beta_on_logit(s.theta_ind, 0.5, 0.5);

    lp += density::log_half_cauchy(s.sigma, hp.sigma_scale);
    lp += density::log_half_cauchy(s.tau, hp.tau_scale);
    for (double b : s.beta) lp += density::log_cauchy(b, hp.beta_scale);

    lp += std::log(hp.model_probs()[static_cast<int>(s.z)]);
    if (with_lik) lp += density::log_binomial_logit(d.new_trial.y, d.new_trial.n, s.selected_theta());
    return lp;
}

}  // namespace spx
