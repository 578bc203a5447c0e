#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "spx/inference.hpp"

namespace spx {

struct DesignConfig {
    int n_max = 200;
    int n_stage1 = 100;
    double p_min = 0.75;
    double p_max = 1.25;
    double delta0 = 0.2;
    double q_positive = 0.05;
    double q_clinical = 0.05;

    /// Stage-1 size of n_max / 2 and the default truncation band.
    static DesignConfig with_max(int n_max);
    void validate() const;
    /// Smallest and largest admissible total control size.
    int min_total() const;
    int max_total() const;
};

struct TreatmentSummary {
    int y_trt = 0;
    int n_trt = 0;
};

/// Moment-matched effective sample size: the parameter sum of the Beta
/// distribution sharing the mean and variance of psi_new, minus n_current.
/// May be negative. Throws RuntimeError when the draws have zero variance.
double ess_moment_match(std::span<const double> psi_draws, int n_current);
inline double ess_moment_match(const PosteriorDraws& draws, int n_current) {
    return ess_moment_match(draws.psi_new, n_current);
}

/// Stage-2 control size. The total n_stage1 + n_2 is truncated to
/// [p_min * n_max, p_max * n_max]; non-finite ess values saturate the band.
int stage2_size(double ess, const DesignConfig& dc);

/// Beta(0.5 + y, 0.5 + n - y) posterior of the treatment rate.
std::pair<double, double> treatment_posterior(const TreatmentSummary& t);

/// delta_i = psi_trt_i - psi_ctl_i. Control draws are paired by index when
/// n_draws matches their count and resampled with replacement otherwise.
std::vector<double> effect_draws(const PosteriorDraws& control, const TreatmentSummary& t, std::size_t n_draws,
                                 std::uint64_t seed);

/// True iff the fraction of draws above `margin` is at least 1 - q
/// (boundary inclusive).
bool decide(std::span<const double> delta_draws, double margin, double q);

struct InterimPlan {
    double ess = 0.0;
    int n_stage2 = 0;
    int total = 0;
    PosteriorDraws interim_draws;
};

/// Interim step: fits `model` on the historical data plus the Stage-1
/// control data in `interim`, then sizes Stage 2.
InterimPlan run_adaptive_trial(const Dataset& interim, const ModelSpec& model, const DesignConfig& dc,
                               const McmcConfig& mc);

struct FinalAnalysis {
    PosteriorDraws control;
    PosteriorSummary summary;
    double prob_positive = 0.0;
    double prob_clinical = 0.0;
    bool positive = false;
    bool clinical = false;
};

/// Final step: fits on the complete control data and applies both decision
/// rules to the treatment arm.
FinalAnalysis complete_trial(const Dataset& full, const TreatmentSummary& treatment, const ModelSpec& model,
                             const DesignConfig& dc, const McmcConfig& mc, std::uint64_t seed);

/// Fraction of draws strictly above margin.
double exceedance(std::span<const double> draws, double margin);

}  // namespace spx
