#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spx {

/// Control-arm summary of one trial. `x` carries a leading intercept entry.
/// A new trial without an observed outcome has n == 0 and y == 0.
struct TrialSummary {
    std::string id;
    int n = 0;
    int y = 0;
    std::vector<double> x;

    bool has_outcome() const noexcept { return n > 0; }
    double observed_rate() const { return static_cast<double>(y) / n; }
};

/// Center/scale applied to each covariate column (intercept excluded).
/// Binary columns carry center 0 and scale 1.
struct CovariateScaling {
    std::vector<double> center;
    std::vector<double> scale;
    std::vector<bool> binary;
};

struct Dataset {
    std::vector<TrialSummary> historical;
    TrialSummary new_trial;
    std::vector<std::string> covariate_names;  // without the intercept
    CovariateScaling scaling;

    std::size_t num_historical() const noexcept { return historical.size(); }
    std::size_t dimension() const noexcept { return new_trial.x.size(); }
};

/// Throws DataError when a trial or the dataset breaks its invariants.
void validate_trial(const TrialSummary& t, bool require_outcome);
void validate_dataset(const Dataset& d, bool require_new_outcome);

/// Standardizes continuous covariate columns to mean 0 and sd 1 across the
/// historical trials and applies the same map to the new trial. Columns whose
/// historical values are all 0/1 are left untouched. `raw` rows exclude the
/// intercept; the returned rows include it.
struct StandardizedCovariates {
    std::vector<std::vector<double>> historical;
    std::vector<double> new_trial;
    CovariateScaling scaling;
};
StandardizedCovariates standardize_covariates(const std::vector<std::vector<double>>& raw_historical,
                                              const std::vector<double>& raw_new);

struct SpxHyperParams {
    double p_hist = 1.0 / 8.0;
    double p_reg = 1.0 / 8.0;
    double p_ind = 3.0 / 4.0;
    double sigma_scale = 0.02;
    double tau_scale = 2.5;
    double beta_scale = 2.5;
    double c = 1.0 / 25.0;
    double w_base = 0.5;
    double w_bandwidth = 0.05;

    std::array<double, 3> model_probs() const noexcept { return {p_hist, p_reg, p_ind}; }
    /// Throws ConfigError.
    void validate() const;
};

enum class Expert : int { hist = 0, reg = 1, ind = 2 };

const char* expert_name(Expert e) noexcept;

struct ParameterState {
    std::vector<double> theta_trials;
    std::vector<double> beta;
    double tau = 1.0;
    double sigma = 0.02;
    double theta_hist = 0.0;
    double theta_reg = 0.0;
    double theta_ind = 0.0;
    Expert z = Expert::ind;

    double expert_theta(Expert e) const noexcept {
        switch (e) {
        case Expert::hist: return theta_hist;
        case Expert::reg: return theta_reg;
        case Expert::ind: break;
        }
        return theta_ind;
    }
    double selected_theta() const noexcept { return expert_theta(z); }
};

struct BorrowWeights {
    std::vector<double> w;         // length H
    std::vector<double> pi_tilde;  // length H + 1, new trial last
};

// ---------------------------------------------------------------------------
// Link functions

/// ln(p / (1 - p)). Throws std::domain_error outside (0, 1).
double logit(double p);

/// 1 / (1 + exp(-t)), kept strictly inside (0, 1).
double inv_logit(double t) noexcept;

/// inv_logit clamped to [1e-12, 1 - 1e-12]; used wherever a rate feeds a
/// binomial likelihood.
double likelihood_rate(double t) noexcept;

double dot(std::span<const double> a, std::span<const double> b) noexcept;

// ---------------------------------------------------------------------------
// Elementary log-densities

namespace density {

double log_binomial_pmf(int y, int n, double p) noexcept;
/// Binomial log-pmf with the success probability given on the logit scale.
double log_binomial_logit(int y, int n, double theta) noexcept;
double log_normal(double x, double mean, double sd) noexcept;
double log_cauchy(double x, double scale) noexcept;
/// Cauchy(0, scale) truncated to (0, inf); -inf for x <= 0.
double log_half_cauchy(double x, double scale) noexcept;
/// Log-density of t = logit(psi) when psi ~ Beta(a, b).
double log_beta_on_logit(double t, double a, double b) noexcept;
/// Standard logistic log-density.
double log_logistic(double t) noexcept;

}  // namespace density

// ---------------------------------------------------------------------------
// SPx prior pieces

/// Distance-kernel weights over the historical trials, computed in log-space.
BorrowWeights borrow_weights(std::span<const double> beta, const Dataset& d, const SpxHyperParams& hp);

/// Same kernel given precomputed linear predictors (historical first, new last).
void borrow_weights_from_predictors(std::span<const double> eta, double w_base, double w_bandwidth,
                                    std::vector<double>& w_out);

double weighted_mean(const BorrowWeights& weights, std::span<const double> theta_trials);

enum class Likelihood { full, prior_only };

/// Unnormalized log posterior of the full SPx hierarchy with every expert
/// parameter instantiated. Returns -inf when tau or sigma leaves its support.
double log_joint(const ParameterState& s, const Dataset& d, const SpxHyperParams& hp,
                 Likelihood lik = Likelihood::full);

}  // namespace spx
