#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "spx/core_model.hpp"
#include "spx/random.hpp"

namespace spx {

/// Random-walk proposal scales, one per parameter block. Adaptation tunes a
/// separate scale per component starting from these values.
struct StepSizes {
    double theta_trials = 0.3;
    double beta = 0.2;
    double log_tau = 0.5;
    double log_sigma = 0.5;
    double theta_hist = 0.1;
    double theta_reg = 0.1;
};

struct McmcConfig {
    int chains = 4;
    int burn_in = 10000;
    int samples = 10000;
    int thin = 1;
    std::uint64_t seed = 1;
    StepSizes step_sizes;
    bool adapt_burnin = true;
    /// Keep every retained ParameterState in PosteriorDraws::full_params.
    bool keep_params = false;

    /// 1 chain x 2,000 burn-in x 2,000 retained; used by the simulation harness.
    static McmcConfig fast(std::uint64_t seed = 1);
    void validate() const;
};

struct BlockAcceptance {
    std::string block;
    double rate = 0.0;
};

struct PosteriorDraws {
    std::vector<double> psi_new;
    std::vector<Expert> z_draws;
    /// Rao-Blackwellized posterior model probabilities (hist, reg, ind). RMAP
    /// reports (MAP, 0, robust) in the same layout.
    std::array<double, 3> rb_weights{0.0, 0.0, 0.0};
    std::optional<std::vector<ParameterState>> full_params;
    std::vector<BlockAcceptance> diagnostics;
};

struct RmapParams {
    double mix_weight = 0.5;
    double mu_prior_sd = 10.0;
    double tau_prior_scale = 1.0;

    void validate() const;
};

/// Prior on the new control rate used by the no-borrowing comparator.
enum class IndependentPrior { uniform, jeffreys };

struct IndependentParams {
    IndependentPrior prior = IndependentPrior::uniform;
};

/// Model selector: which prior to fit for the new trial's control rate.
using ModelSpec = std::variant<SpxHyperParams, RmapParams, IndependentParams>;

const char* model_name(const ModelSpec& m) noexcept;

struct ZUpdate {
    Expert z = Expert::ind;
    std::array<double, 3> probs{0.0, 0.0, 1.0};
};

/// Exact categorical full conditional of the expert selector given every
/// expert's logit rate. Computed in log-space; never NaN.
std::array<double, 3> z_conditional(const ParameterState& s, const TrialSummary& new_trial,
                                    const SpxHyperParams& hp, Likelihood lik = Likelihood::full);
ZUpdate update_z(const ParameterState& s, const TrialSummary& new_trial, const SpxHyperParams& hp,
                 Rng& rng, Likelihood lik = Likelihood::full);

/// Metropolis-within-Gibbs sampler for the SPx hierarchy. With
/// Likelihood::prior_only every binomial term is dropped, which turns the
/// sampler into a prior simulator (used for Geweke-style checks).
PosteriorDraws fit_spx(const Dataset& d, const SpxHyperParams& hp, const McmcConfig& mc,
                       Likelihood lik = Likelihood::full);

PosteriorDraws fit_rmap(const Dataset& d, const RmapParams& rp, const McmcConfig& mc,
                        Likelihood lik = Likelihood::full);

/// Exact conjugate draws: Beta(1 + y, 1 + n - y) under the uniform prior,
/// Beta(0.5 + y, 0.5 + n - y) under the Jeffreys prior.
PosteriorDraws fit_independent(const TrialSummary& new_trial, std::size_t n_draws, std::uint64_t seed,
                               IndependentPrior prior = IndependentPrior::uniform);

/// Dispatches on the model selector. The independent model draws
/// chains * samples values.
PosteriorDraws fit_model(const ModelSpec& model, const Dataset& d, const McmcConfig& mc);

struct PosteriorSummary {
    double mean = 0.0;
    double variance = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    double width() const noexcept { return upper - lower; }
};

/// Mean, population variance and equal-tailed interval of psi_new. Quantiles
/// use linear interpolation between order statistics (R type 7).
PosteriorSummary summarize(const PosteriorDraws& draws, double level = 0.95);

/// Type-7 quantile of an already sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double prob);

}  // namespace spx
