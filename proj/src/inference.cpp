#include "spx/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "spx/errors.hpp"

namespace spx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTargetAcceptance = 0.44;
constexpr int kAdaptBatch = 50;

// Binomial log-likelihood without the combinatorial constant.
double binomial_kernel(int y, int n, double theta) noexcept {
    if (n == 0) return 0.0;
    const double p = likelihood_rate(theta);
    return y * std::log(p) + (n - y) * std::log1p(-p);
}

double normal_kernel(double x, double mean, double sd) noexcept {
    const double z = (x - mean) / sd;
    return -0.5 * z * z;
}

bool accept(Rng& rng, double log_ratio) noexcept {
    return log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
}

// One adaptive random-walk coordinate.
struct Proposal {
    double log_scale = 0.0;
    int batch_attempts = 0;
    int batch_accepts = 0;
    long attempts = 0;
    long accepts = 0;

    explicit Proposal(double scale = 0.1) : log_scale(std::log(scale)) {}

    double scale() const noexcept { return std::exp(log_scale); }

    void record(bool accepted, bool counting) noexcept {
        ++batch_attempts;
        batch_accepts += accepted ? 1 : 0;
        if (counting) {
            ++attempts;
            accepts += accepted ? 1 : 0;
        }
    }

    void adapt(int batch_index) noexcept {
        if (batch_attempts >= 10) {
            const double delta = std::min(0.05, 1.0 / std::sqrt(static_cast<double>(batch_index)));
            const double rate = static_cast<double>(batch_accepts) / batch_attempts;
            log_scale += rate > kTargetAcceptance ? delta : -delta;
        }
        batch_attempts = 0;
        batch_accepts = 0;
    }

    void reset_batch() noexcept {
        batch_attempts = 0;
        batch_accepts = 0;
    }
};

BlockAcceptance block_rate(std::string name, std::span<const Proposal> props) {
    long a = 0;
    long n = 0;
    for (const auto& p : props) {
        a += p.accepts;
        n += p.attempts;
    }
    return {std::move(name), n > 0 ? static_cast<double>(a) / n : std::numeric_limits<double>::quiet_NaN()};
}

// Output of one chain before merging.
struct ChainOutput {
    std::vector<double> psi;
    std::vector<Expert> z;
    std::array<double, 3> rb_sum{0.0, 0.0, 0.0};
    long rb_count = 0;
    std::vector<ParameterState> params;
    std::vector<BlockAcceptance> diagnostics;
};

template <class RunChain>
PosteriorDraws run_chains(const McmcConfig& mc, RunChain run_chain) {
    std::vector<ChainOutput> outputs(static_cast<std::size_t>(mc.chains));
    if (mc.chains == 1) {
        outputs[0] = run_chain(0);
    } else {
        std::vector<std::jthread> workers;
        workers.reserve(outputs.size());
        for (int c = 0; c < mc.chains; ++c)
            workers.emplace_back([&, c] { outputs[static_cast<std::size_t>(c)] = run_chain(c); });
    }

    PosteriorDraws draws;
    long rb_count = 0;
    for (auto& out : outputs) {
        draws.psi_new.insert(draws.psi_new.end(), out.psi.begin(), out.psi.end());
        draws.z_draws.insert(draws.z_draws.end(), out.z.begin(), out.z.end());
        for (int k = 0; k < 3; ++k) draws.rb_weights[k] += out.rb_sum[k];
        rb_count += out.rb_count;
        if (mc.keep_params) {
            if (!draws.full_params) draws.full_params.emplace();
            draws.full_params->insert(draws.full_params->end(), out.params.begin(), out.params.end());
        }
    }
    const double total = draws.rb_weights[0] + draws.rb_weights[1] + draws.rb_weights[2];
    for (double& v : draws.rb_weights) v /= total;

    // Per-block acceptance averaged over chains.
    draws.diagnostics = outputs[0].diagnostics;
    for (std::size_t b = 0; b < draws.diagnostics.size(); ++b) {
        double sum = 0.0;
        int count = 0;
        for (const auto& out : outputs) {
            if (!std::isnan(out.diagnostics[b].rate)) {
                sum += out.diagnostics[b].rate;
                ++count;
            }
        }
        draws.diagnostics[b].rate = count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
    }
    (void)rb_count;
    return draws;
}

// ---------------------------------------------------------------------------
// SPx chain

class SpxChain {
public:
    SpxChain(const Dataset& d, const SpxHyperParams& hp, const McmcConfig& mc, Likelihood lik,
             std::uint64_t seed)
        : d_(d), hp_(hp), mc_(mc), with_lik_(lik == Likelihood::full), rng_(seed),
          h_(d.num_historical()), p_(d.dimension()), sqrt_c_(std::sqrt(hp.c)) {
        theta_props_.assign(h_, Proposal(mc.step_sizes.theta_trials));
        beta_props_.assign(p_, Proposal(mc.step_sizes.beta));
        beta_shift_props_.assign(p_, Proposal(mc.step_sizes.beta));
        tau_prop_ = Proposal(mc.step_sizes.log_tau);
        tau_scale_prop_ = Proposal(mc.step_sizes.log_tau);
        sigma_prop_ = Proposal(mc.step_sizes.log_sigma);
        hist_prop_ = Proposal(mc.step_sizes.theta_hist);
        reg_prop_ = Proposal(mc.step_sizes.theta_reg);
        initialize();
    }

    ChainOutput run() {
        ChainOutput out;
        const int total = mc_.burn_in + mc_.samples * mc_.thin;
        const std::size_t keep = static_cast<std::size_t>(mc_.samples);
        out.psi.reserve(keep);
        out.z.reserve(keep);
        int batch_index = 0;
        for (int it = 0; it < total; ++it) {
            counting_ = it >= mc_.burn_in;
            const auto q = sweep();
            if (!counting_) {
                if (mc_.adapt_burnin && (it + 1) % kAdaptBatch == 0) adapt(++batch_index);
                continue;
            }
            if (it == mc_.burn_in) reset_batches();
            for (int k = 0; k < 3; ++k) out.rb_sum[k] += q[k];
            ++out.rb_count;
            if ((it - mc_.burn_in + 1) % mc_.thin == 0) {
                out.psi.push_back(inv_logit(s_.selected_theta()));
                out.z.push_back(s_.z);
                if (mc_.keep_params) out.params.push_back(s_);
            }
        }
        out.diagnostics = {
            block_rate("theta_trials", theta_props_), block_rate("beta", beta_props_),
            block_rate("beta_shift", beta_shift_props_), block_rate("log_tau", std::span(&tau_prop_, 1)),
            block_rate("log_tau_rescale", std::span(&tau_scale_prop_, 1)),
            block_rate("log_sigma", std::span(&sigma_prop_, 1)),
            block_rate("theta_hist", std::span(&hist_prop_, 1)), block_rate("theta_reg", std::span(&reg_prop_, 1)),
        };
        return out;
    }

private:
    double lik_new(double theta) const noexcept {
        return with_lik_ ? binomial_kernel(d_.new_trial.y, d_.new_trial.n, theta) : 0.0;
    }
    double lik_hist(std::size_t i, double theta) const noexcept {
        const auto& t = d_.historical[i];
        return with_lik_ ? binomial_kernel(t.y, t.n, theta) : 0.0;
    }
    bool hist_active() const noexcept { return s_.z == Expert::hist; }
    bool reg_active() const noexcept { return s_.z == Expert::reg; }
    double reg_sd(double tau) const noexcept { return sqrt_c_ * tau; }

    void initialize() {
        s_.theta_trials.resize(h_);
        double mean = 0.0;
        for (std::size_t i = 0; i < h_; ++i) {
            const auto& t = d_.historical[i];
            s_.theta_trials[i] = std::log((t.y + 0.5) / (t.n - t.y + 0.5));
            mean += s_.theta_trials[i];
        }
        mean /= static_cast<double>(h_);
        double ss = 0.0;
        for (double v : s_.theta_trials) ss += (v - mean) * (v - mean);
        s_.beta.assign(p_, 0.0);
        s_.beta[0] = mean;
        s_.tau = std::max(0.1, std::sqrt(ss / static_cast<double>(std::max<std::size_t>(h_, 2) - 1)));
        s_.sigma = hp_.sigma_scale;
        refresh_predictors();
        s_.theta_hist = mu_hist_;
        s_.theta_reg = eta_[h_];
        const auto& nt = d_.new_trial;
        s_.theta_ind = nt.has_outcome() ? std::log((nt.y + 0.5) / (nt.n - nt.y + 0.5)) : 0.0;
        s_.z = update_z(s_, nt, hp_, rng_, with_lik_ ? Likelihood::full : Likelihood::prior_only).z;
    }

    void refresh_predictors() {
        eta_.resize(h_ + 1);
        for (std::size_t i = 0; i < h_; ++i) eta_[i] = dot(s_.beta, d_.historical[i].x);
        eta_[h_] = dot(s_.beta, d_.new_trial.x);
        borrow_weights_from_predictors(eta_, hp_.w_base, hp_.w_bandwidth, w_);
        mu_hist_ = dot(w_, s_.theta_trials);
    }

    std::array<double, 3> sweep() {
        for (std::size_t i = 0; i < h_; ++i) update_theta_trial(i);
        for (std::size_t j = 0; j < p_; ++j) update_beta(j);
        for (std::size_t j = 0; j < p_; ++j) shift_beta(j);
        update_tau();
        rescale_tau();
        update_sigma();
        update_theta_hist();
        update_theta_reg();
        update_theta_ind();
        const auto zu = update_z(s_, d_.new_trial, hp_, rng_, with_lik_ ? Likelihood::full : Likelihood::prior_only);
        s_.z = zu.z;
        return zu.probs;
    }

    // Historical logit rate. The hist expert's density enters only while that
    // expert is selected; otherwise theta_hist is integrated out and redrawn
    // from its conditional prior later in the sweep.
    void update_theta_trial(std::size_t i) {
        auto& prop = theta_props_[i];
        const double cur = s_.theta_trials[i];
        const double next = cur + prop.scale() * rng_.normal();
        double ratio = lik_hist(i, next) - lik_hist(i, cur) + normal_kernel(next, eta_[i], s_.tau) -
                       normal_kernel(cur, eta_[i], s_.tau);
        double mu_next = mu_hist_ + w_[i] * (next - cur);
        if (hist_active())
            ratio += normal_kernel(s_.theta_hist, mu_next, s_.sigma) - normal_kernel(s_.theta_hist, mu_hist_, s_.sigma);
        const bool ok = accept(rng_, ratio);
        prop.record(ok, counting_);
        if (ok) {
            s_.theta_trials[i] = next;
            mu_hist_ = mu_next;
        }
    }

    void update_beta(std::size_t j) {
        auto& prop = beta_props_[j];
        const double delta = prop.scale() * rng_.normal();
        const double cur = s_.beta[j];
        const double next = cur + delta;

        eta_next_.resize(h_ + 1);
        double ratio = density::log_cauchy(next, hp_.beta_scale) - density::log_cauchy(cur, hp_.beta_scale);
        for (std::size_t i = 0; i < h_; ++i) {
            eta_next_[i] = eta_[i] + delta * d_.historical[i].x[j];
            ratio += normal_kernel(s_.theta_trials[i], eta_next_[i], s_.tau) -
                     normal_kernel(s_.theta_trials[i], eta_[i], s_.tau);
        }
        eta_next_[h_] = eta_[h_] + delta * d_.new_trial.x[j];
        if (reg_active()) {
            ratio += normal_kernel(s_.theta_reg, eta_next_[h_], reg_sd(s_.tau)) -
                     normal_kernel(s_.theta_reg, eta_[h_], reg_sd(s_.tau));
        }
        double mu_next = mu_hist_;
        if (hist_active()) {
            borrow_weights_from_predictors(eta_next_, hp_.w_base, hp_.w_bandwidth, w_next_);
            mu_next = dot(w_next_, s_.theta_trials);
            ratio += normal_kernel(s_.theta_hist, mu_next, s_.sigma) - normal_kernel(s_.theta_hist, mu_hist_, s_.sigma);
        }
        const bool ok = accept(rng_, ratio);
        prop.record(ok, counting_);
        if (!ok) return;
        s_.beta[j] = next;
        eta_.swap(eta_next_);
        if (hist_active()) {
            w_.swap(w_next_);
            mu_hist_ = mu_next;
        } else {
            borrow_weights_from_predictors(eta_, hp_.w_base, hp_.w_bandwidth, w_);
            mu_hist_ = dot(w_, s_.theta_trials);
        }
    }

    // Moves beta_j and every theta_h together so the residuals theta_h - eta_h
    // stay fixed; this crosses the heavy Cauchy tails far faster than the
    // coordinate update when the historical data are weak.
    void shift_beta(std::size_t j) {
        auto& prop = beta_shift_props_[j];
        const double delta = prop.scale() * rng_.normal();
        const double cur = s_.beta[j];
        const double next = cur + delta;

        theta_next_.resize(h_);
        eta_next_.resize(h_ + 1);
        double ratio = density::log_cauchy(next, hp_.beta_scale) - density::log_cauchy(cur, hp_.beta_scale);
        for (std::size_t i = 0; i < h_; ++i) {
            const double shift = delta * d_.historical[i].x[j];
            theta_next_[i] = s_.theta_trials[i] + shift;
            eta_next_[i] = eta_[i] + shift;
            ratio += lik_hist(i, theta_next_[i]) - lik_hist(i, s_.theta_trials[i]);
        }
        eta_next_[h_] = eta_[h_] + delta * d_.new_trial.x[j];
        if (reg_active()) {
            ratio += normal_kernel(s_.theta_reg, eta_next_[h_], reg_sd(s_.tau)) -
                     normal_kernel(s_.theta_reg, eta_[h_], reg_sd(s_.tau));
        }
        borrow_weights_from_predictors(eta_next_, hp_.w_base, hp_.w_bandwidth, w_next_);
        const double mu_next = dot(w_next_, theta_next_);
        if (hist_active())
            ratio += normal_kernel(s_.theta_hist, mu_next, s_.sigma) - normal_kernel(s_.theta_hist, mu_hist_, s_.sigma);
        const bool ok = accept(rng_, ratio);
        prop.record(ok, counting_);
        if (!ok) return;
        s_.beta[j] = next;
        s_.theta_trials.swap(theta_next_);
        eta_.swap(eta_next_);
        w_.swap(w_next_);
        mu_hist_ = mu_next;
    }

    // Random walk on log(tau); the trailing log-tau terms are the Jacobian.
    void update_tau() {
        const double cur = s_.tau;
        const double next = cur * std::exp(tau_prop_.scale() * rng_.normal());
        double ss = 0.0;
        for (std::size_t i = 0; i < h_; ++i) {
            const double r = s_.theta_trials[i] - eta_[i];
            ss += r * r;
        }
        auto log_target = [&](double tau) {
            double v = -0.5 * ss / (tau * tau) - static_cast<double>(h_) * std::log(tau);
            if (reg_active()) v += density::log_normal(s_.theta_reg, eta_[h_], reg_sd(tau));
            return v + density::log_half_cauchy(tau, hp_.tau_scale) + std::log(tau);
        };
        const bool ok = accept(rng_, log_target(next) - log_target(cur));
        tau_prop_.record(ok, counting_);
        if (ok) s_.tau = next;
    }

    // Rescales tau together with the residuals theta_h - eta_h (non-centered
    // update). In residual coordinates the tau^-H normal factor cancels
    // against the Jacobian, leaving the likelihood and the tau prior.
    void rescale_tau() {
        const double cur = s_.tau;
        const double next = cur * std::exp(tau_scale_prop_.scale() * rng_.normal());
        const double factor = next / cur;
        theta_next_.resize(h_);
        double ratio = density::log_half_cauchy(next, hp_.tau_scale) - density::log_half_cauchy(cur, hp_.tau_scale) +
                       std::log(factor);
        for (std::size_t i = 0; i < h_; ++i) {
            theta_next_[i] = eta_[i] + factor * (s_.theta_trials[i] - eta_[i]);
            ratio += lik_hist(i, theta_next_[i]) - lik_hist(i, s_.theta_trials[i]);
        }
        if (reg_active()) {
            ratio += density::log_normal(s_.theta_reg, eta_[h_], reg_sd(next)) -
                     density::log_normal(s_.theta_reg, eta_[h_], reg_sd(cur));
        }
        const double mu_next = dot(w_, theta_next_);
        if (hist_active())
            ratio += normal_kernel(s_.theta_hist, mu_next, s_.sigma) - normal_kernel(s_.theta_hist, mu_hist_, s_.sigma);
        const bool ok = accept(rng_, ratio);
        tau_scale_prop_.record(ok, counting_);
        if (!ok) return;
        s_.tau = next;
        s_.theta_trials.swap(theta_next_);
        mu_hist_ = mu_next;
    }

    void update_sigma() {
        if (!hist_active()) {
            s_.sigma = rng_.half_cauchy(hp_.sigma_scale);
            return;
        }
        const double cur = s_.sigma;
        const double next = cur * std::exp(sigma_prop_.scale() * rng_.normal());
        auto log_target = [&](double sigma) {
            return density::log_normal(s_.theta_hist, mu_hist_, sigma) + density::log_half_cauchy(sigma, hp_.sigma_scale) +
                   std::log(sigma);
        };
        const bool ok = accept(rng_, log_target(next) - log_target(cur));
        sigma_prop_.record(ok, counting_);
        if (ok) s_.sigma = next;
    }

    void update_theta_hist() {
        if (!hist_active() || !with_lik_) {
            s_.theta_hist = rng_.normal(mu_hist_, s_.sigma);
            return;
        }
        const double cur = s_.theta_hist;
        const double next = cur + hist_prop_.scale() * rng_.normal();
        const double ratio = lik_new(next) - lik_new(cur) + normal_kernel(next, mu_hist_, s_.sigma) -
                             normal_kernel(cur, mu_hist_, s_.sigma);
        const bool ok = accept(rng_, ratio);
        hist_prop_.record(ok, counting_);
        if (ok) s_.theta_hist = next;
    }

    void update_theta_reg() {
        const double sd = reg_sd(s_.tau);
        if (!reg_active() || !with_lik_) {
            s_.theta_reg = rng_.normal(eta_[h_], sd);
            return;
        }
        const double cur = s_.theta_reg;
        const double next = cur + reg_prop_.scale() * rng_.normal();
        const double ratio =
            lik_new(next) - lik_new(cur) + normal_kernel(next, eta_[h_], sd) - normal_kernel(cur, eta_[h_], sd);
        const bool ok = accept(rng_, ratio);
        reg_prop_.record(ok, counting_);
        if (ok) s_.theta_reg = next;
    }

    void update_theta_ind() {
        const auto& nt = d_.new_trial;
        if (s_.z == Expert::ind && with_lik_)
            s_.theta_ind = rng_.logit_beta(0.5 + nt.y, 0.5 + nt.n - nt.y);
        else
            s_.theta_ind = rng_.logit_beta(0.5, 0.5);
    }

    void adapt(int batch_index) {
        for (auto& p : theta_props_) p.adapt(batch_index);
        for (auto& p : beta_props_) p.adapt(batch_index);
        for (auto& p : beta_shift_props_) p.adapt(batch_index);
        for (auto* p : {&tau_prop_, &tau_scale_prop_, &sigma_prop_, &hist_prop_, &reg_prop_}) p->adapt(batch_index);
    }

    void reset_batches() {
        for (auto& p : theta_props_) p.reset_batch();
        for (auto& p : beta_props_) p.reset_batch();
        for (auto& p : beta_shift_props_) p.reset_batch();
        for (auto* p : {&tau_prop_, &tau_scale_prop_, &sigma_prop_, &hist_prop_, &reg_prop_}) p->reset_batch();
    }

    const Dataset& d_;
    const SpxHyperParams& hp_;
    const McmcConfig& mc_;
    bool with_lik_;
    Rng rng_;
    std::size_t h_;
    std::size_t p_;
    double sqrt_c_;
    bool counting_ = false;

    ParameterState s_;
    std::vector<double> eta_;
    std::vector<double> eta_next_;
    std::vector<double> w_;
    std::vector<double> w_next_;
    std::vector<double> theta_next_;
    double mu_hist_ = 0.0;

    std::vector<Proposal> theta_props_;
    std::vector<Proposal> beta_props_;
    std::vector<Proposal> beta_shift_props_;
    Proposal tau_prop_;
    Proposal tau_scale_prop_;
    Proposal sigma_prop_;
    Proposal hist_prop_;
    Proposal reg_prop_;
};

// ---------------------------------------------------------------------------
// RMAP chain: theta_h ~ N(mu, tau^2); the new trial's logit rate is the MAP
// component N(mu, tau^2) with probability mix_weight, else Logistic(0, 1).

class RmapChain {
public:
    RmapChain(const Dataset& d, const RmapParams& rp, const McmcConfig& mc, Likelihood lik, std::uint64_t seed)
        : d_(d), rp_(rp), mc_(mc), with_lik_(lik == Likelihood::full), rng_(seed), h_(d.num_historical()) {
        theta_props_.assign(h_, Proposal(mc.step_sizes.theta_trials));
        tau_prop_ = Proposal(mc.step_sizes.log_tau);
        tau_scale_prop_ = Proposal(mc.step_sizes.log_tau);
        map_prop_ = Proposal(mc.step_sizes.theta_hist);
        initialize();
    }

    ChainOutput run() {
        ChainOutput out;
        const int total = mc_.burn_in + mc_.samples * mc_.thin;
        out.psi.reserve(static_cast<std::size_t>(mc_.samples));
        int batch_index = 0;
        for (int it = 0; it < total; ++it) {
            counting_ = it >= mc_.burn_in;
            const auto q = sweep();
            if (!counting_) {
                if (mc_.adapt_burnin && (it + 1) % kAdaptBatch == 0) {
                    ++batch_index;
                    for (auto& p : theta_props_) p.adapt(batch_index);
                    tau_prop_.adapt(batch_index);
                    tau_scale_prop_.adapt(batch_index);
                    map_prop_.adapt(batch_index);
                }
                continue;
            }
            out.rb_sum[0] += q[0];
            out.rb_sum[2] += q[1];
            ++out.rb_count;
            if ((it - mc_.burn_in + 1) % mc_.thin == 0) {
                const bool use_map = map_selected_;
                out.psi.push_back(inv_logit(use_map ? theta_map_ : theta_rob_));
                out.z.push_back(use_map ? Expert::hist : Expert::ind);
                if (mc_.keep_params) {
                    ParameterState ps;
                    ps.theta_trials = theta_;
                    ps.beta = {mu_};
                    ps.tau = tau_;
                    ps.theta_hist = theta_map_;
                    ps.theta_ind = theta_rob_;
                    ps.z = use_map ? Expert::hist : Expert::ind;
                    out.params.push_back(std::move(ps));
                }
            }
        }
        out.diagnostics = {block_rate("theta_trials", theta_props_), block_rate("log_tau", std::span(&tau_prop_, 1)),
                           block_rate("log_tau_rescale", std::span(&tau_scale_prop_, 1)),
                           block_rate("theta_map", std::span(&map_prop_, 1))};
        return out;
    }

private:
    double lik_new(double theta) const noexcept {
        return with_lik_ ? binomial_kernel(d_.new_trial.y, d_.new_trial.n, theta) : 0.0;
    }

    void initialize() {
        theta_.resize(h_);
        double mean = 0.0;
        for (std::size_t i = 0; i < h_; ++i) {
            const auto& t = d_.historical[i];
            theta_[i] = std::log((t.y + 0.5) / (t.n - t.y + 0.5));
            mean += theta_[i];
        }
        mu_ = mean / static_cast<double>(h_);
        tau_ = rp_.tau_prior_scale;
        theta_map_ = mu_;
        theta_rob_ = 0.0;
        map_selected_ = rp_.mix_weight >= 0.5;
    }

    std::array<double, 2> sweep() {
        for (std::size_t i = 0; i < h_; ++i) update_theta(i);
        update_mu();
        update_tau();
        rescale_tau();
        update_map();
        update_robust();
        return update_indicator();
    }

    void update_theta(std::size_t i) {
        auto& prop = theta_props_[i];
        const auto& t = d_.historical[i];
        const double cur = theta_[i];
        const double next = cur + prop.scale() * rng_.normal();
        double ratio = normal_kernel(next, mu_, tau_) - normal_kernel(cur, mu_, tau_);
        if (with_lik_) ratio += binomial_kernel(t.y, t.n, next) - binomial_kernel(t.y, t.n, cur);
        const bool ok = accept(rng_, ratio);
        prop.record(ok, counting_);
        if (ok) theta_[i] = next;
    }

    // Conjugate normal update; theta_map counts only while it is selected.
    void update_mu() {
        double sum = std::accumulate(theta_.begin(), theta_.end(), 0.0);
        double m = static_cast<double>(h_);
        if (map_selected_) {
            sum += theta_map_;
            m += 1.0;
        }
        const double prior_prec = 1.0 / (rp_.mu_prior_sd * rp_.mu_prior_sd);
        const double prec = prior_prec + m / (tau_ * tau_);
        const double mean = (sum / (tau_ * tau_)) / prec;
        mu_ = rng_.normal(mean, 1.0 / std::sqrt(prec));
    }

    void update_tau() {
        double ss = 0.0;
        for (double v : theta_) ss += (v - mu_) * (v - mu_);
        double m = static_cast<double>(h_);
        if (map_selected_) {
            ss += (theta_map_ - mu_) * (theta_map_ - mu_);
            m += 1.0;
        }
        auto log_target = [&](double tau) {
            return -0.5 * ss / (tau * tau) - m * std::log(tau) + density::log_half_cauchy(tau, rp_.tau_prior_scale) +
                   std::log(tau);
        };
        const double next = tau_ * std::exp(tau_prop_.scale() * rng_.normal());
        const bool ok = accept(rng_, log_target(next) - log_target(tau_));
        tau_prop_.record(ok, counting_);
        if (ok) tau_ = next;
    }

    // Non-centered companion to update_tau: residuals theta_h - mu scale with tau.
    void rescale_tau() {
        const double next = tau_ * std::exp(tau_scale_prop_.scale() * rng_.normal());
        const double factor = next / tau_;
        theta_next_.resize(h_);
        double ratio = density::log_half_cauchy(next, rp_.tau_prior_scale) -
                       density::log_half_cauchy(tau_, rp_.tau_prior_scale) + std::log(factor);
        for (std::size_t i = 0; i < h_; ++i) {
            theta_next_[i] = mu_ + factor * (theta_[i] - mu_);
            if (with_lik_) {
                const auto& t = d_.historical[i];
                ratio += binomial_kernel(t.y, t.n, theta_next_[i]) - binomial_kernel(t.y, t.n, theta_[i]);
            }
        }
        if (map_selected_)
            ratio += density::log_normal(theta_map_, mu_, next) - density::log_normal(theta_map_, mu_, tau_);
        const bool ok = accept(rng_, ratio);
        tau_scale_prop_.record(ok, counting_);
        if (!ok) return;
        tau_ = next;
        theta_.swap(theta_next_);
    }

    void update_map() {
        if (!map_selected_ || !with_lik_) {
            theta_map_ = rng_.normal(mu_, tau_);
            return;
        }
        const double next = theta_map_ + map_prop_.scale() * rng_.normal();
        const double ratio = lik_new(next) - lik_new(theta_map_) + normal_kernel(next, mu_, tau_) -
                             normal_kernel(theta_map_, mu_, tau_);
        const bool ok = accept(rng_, ratio);
        map_prop_.record(ok, counting_);
        if (ok) theta_map_ = next;
    }

    // Logistic(0, 1) on the logit scale is Uniform(0, 1) on the rate scale.
    void update_robust() {
        const auto& nt = d_.new_trial;
        if (!map_selected_ && with_lik_)
            theta_rob_ = rng_.logit_beta(1.0 + nt.y, 1.0 + nt.n - nt.y);
        else
            theta_rob_ = rng_.logit_beta(1.0, 1.0);
    }

    std::array<double, 2> update_indicator() {
        std::array<double, 2> q{rp_.mix_weight, 1.0 - rp_.mix_weight};
        if (rp_.mix_weight > 0.0 && rp_.mix_weight < 1.0) {
            const double a = std::log(rp_.mix_weight) + lik_new(theta_map_);
            const double b = std::log1p(-rp_.mix_weight) + lik_new(theta_rob_);
            const double m = std::max(a, b);
            const double ea = std::exp(a - m);
            const double eb = std::exp(b - m);
            q = {ea / (ea + eb), eb / (ea + eb)};
        }
        map_selected_ = rng_.uniform() < q[0];
        return q;
    }

    const Dataset& d_;
    const RmapParams& rp_;
    const McmcConfig& mc_;
    bool with_lik_;
    Rng rng_;
    std::size_t h_;
    bool counting_ = false;

    std::vector<double> theta_;
    std::vector<double> theta_next_;
    double mu_ = 0.0;
    double tau_ = 1.0;
    double theta_map_ = 0.0;
    double theta_rob_ = 0.0;
    bool map_selected_ = true;

    std::vector<Proposal> theta_props_;
    Proposal tau_prop_;
    Proposal tau_scale_prop_;
    Proposal map_prop_;
};

}  // namespace

McmcConfig McmcConfig::fast(std::uint64_t seed) {
    McmcConfig mc;
    mc.chains = 1;
    mc.burn_in = 2000;
    mc.samples = 2000;
    mc.seed = seed;
    return mc;
}

void McmcConfig::validate() const {
    if (chains < 1) throw ConfigError("mcmc: chains must be >= 1");
    if (burn_in < 0) throw ConfigError("mcmc: burn_in must be >= 0");
    if (samples < 1) throw ConfigError("mcmc: samples must be >= 1");
    if (thin < 1) throw ConfigError("mcmc: thin must be >= 1");
    const auto& s = step_sizes;
    for (double v : {s.theta_trials, s.beta, s.log_tau, s.log_sigma, s.theta_hist, s.theta_reg}) {
        if (!(v > 0.0)) throw ConfigError("mcmc: step sizes must be positive");
    }
}

void RmapParams::validate() const {
    if (!(mix_weight >= 0.0 && mix_weight <= 1.0)) throw ConfigError("rmap: mix_weight must lie in [0, 1]");
    if (!(mu_prior_sd > 0.0 && tau_prior_scale > 0.0)) throw ConfigError("rmap: prior scales must be positive");
}

const char* model_name(const ModelSpec& m) noexcept {
    switch (m.index()) {
    case 0: return "spx";
    case 1: return "rmap";
    default: return "independent";
    }
}

std::array<double, 3> z_conditional(const ParameterState& s, const TrialSummary& new_trial, const SpxHyperParams& hp,
                                    Likelihood lik) {
    const auto prior = hp.model_probs();
    std::array<double, 3> logq{};
    double max_log = kNegInf;
    for (int k = 0; k < 3; ++k) {
        if (prior[k] <= 0.0) {
            logq[k] = kNegInf;
            continue;
        }
        logq[k] = std::log(prior[k]);
        if (lik == Likelihood::full)
            logq[k] += binomial_kernel(new_trial.y, new_trial.n, s.expert_theta(static_cast<Expert>(k)));
        max_log = std::max(max_log, logq[k]);
    }
    std::array<double, 3> q{};
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
        q[k] = logq[k] == kNegInf ? 0.0 : std::exp(logq[k] - max_log);
        total += q[k];
    }
    for (double& v : q) v /= total;
    return q;
}

ZUpdate update_z(const ParameterState& s, const TrialSummary& new_trial, const SpxHyperParams& hp, Rng& rng,
                 Likelihood lik) {
    ZUpdate out;
    out.probs = z_conditional(s, new_trial, hp, lik);
    const double u = rng.uniform();
    double cum = 0.0;
    int chosen = -1;
    for (int k = 0; k < 3; ++k) {
        if (out.probs[k] <= 0.0) continue;
        chosen = k;
        cum += out.probs[k];
        if (u < cum) break;
    }
    out.z = static_cast<Expert>(chosen);
    return out;
}

PosteriorDraws fit_spx(const Dataset& d, const SpxHyperParams& hp, const McmcConfig& mc, Likelihood lik) {
    hp.validate();
    mc.validate();
    validate_dataset(d, lik == Likelihood::full);
    return run_chains(mc, [&](int chain) {
        SpxChain sampler(d, hp, mc, lik, derive_seed(mc.seed, static_cast<std::uint64_t>(chain)));
        return sampler.run();
    });
}

PosteriorDraws fit_rmap(const Dataset& d, const RmapParams& rp, const McmcConfig& mc, Likelihood lik) {
    rp.validate();
    mc.validate();
    validate_dataset(d, lik == Likelihood::full);
    return run_chains(mc, [&](int chain) {
        RmapChain sampler(d, rp, mc, lik, derive_seed(mc.seed, static_cast<std::uint64_t>(chain)));
        return sampler.run();
    });
}

PosteriorDraws fit_independent(const TrialSummary& new_trial, std::size_t n_draws, std::uint64_t seed,
                               IndependentPrior prior) {
    validate_trial(new_trial, true);
    if (n_draws == 0) throw ConfigError("independent: draw count must be positive");
    const double a0 = prior == IndependentPrior::uniform ? 1.0 : 0.5;
    const double a = a0 + new_trial.y;
    const double b = a0 + new_trial.n - new_trial.y;
    Rng rng(derive_seed(seed, 0));
    PosteriorDraws draws;
    draws.psi_new.resize(n_draws);
    for (auto& v : draws.psi_new) v = inv_logit(rng.logit_beta(a, b));
    draws.z_draws.assign(n_draws, Expert::ind);
    draws.rb_weights = {0.0, 0.0, 1.0};
    return draws;
}

PosteriorDraws fit_model(const ModelSpec& model, const Dataset& d, const McmcConfig& mc) {
    if (const auto* hp = std::get_if<SpxHyperParams>(&model)) return fit_spx(d, *hp, mc);
    if (const auto* rp = std::get_if<RmapParams>(&model)) return fit_rmap(d, *rp, mc);
    const auto& ip = std::get<IndependentParams>(model);
    mc.validate();
    return fit_independent(d.new_trial, static_cast<std::size_t>(mc.chains) * static_cast<std::size_t>(mc.samples),
                           mc.seed, ip.prior);
}

double sorted_quantile(const std::vector<double>& sorted, double prob) {
    if (sorted.empty()) throw RuntimeError("quantile of an empty sample");
    const double hpos = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(hpos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (hpos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

PosteriorSummary summarize(const PosteriorDraws& draws, double level) {
    const auto& v = draws.psi_new;
    if (v.empty()) throw RuntimeError("summarize: no posterior draws");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("summarize: level must lie in (0, 1)");
    PosteriorSummary s;
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / n;
    std::vector<double> sorted(v);
    std::sort(sorted.begin(), sorted.end());
    const double tail = 0.5 * (1.0 - level);
    s.lower = sorted_quantile(sorted, tail);
    s.upper = sorted_quantile(sorted, 1.0 - tail);
    return s;
}

}  // namespace spx
