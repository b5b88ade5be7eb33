#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "omrf/estimate.hpp"
#include "omrf/gibbs.hpp"
#include "omrf/model.hpp"
#include "omrf/rescale.hpp"

namespace omrf {

struct AdaCoreConfig {
  double xi = 0.05;       // EMA weight for the drift statistic
  double tau = 0.0;       // trigger threshold; <= 0 means 3/sqrt(n)
  double epsilon = 1e-12;

  double resolve_tau(int n) const { return tau > 0.0 ? tau : 3.0 / std::sqrt(double(n)); }
};

struct SamplerConfig {
  int iterations = 25000;
  int burn_in = 5000;
  std::uint64_t seed = 1;
  double sigma2_init = 0.0;  // <= 0 means the method default
  double target_accept = 0.574;
  int fisher_refresh = 50;        // accepted moves between preconditioner refreshes
  int inner_gibbs_iters = 25000;  // DMH: single-site updates per auxiliary regeneration
  std::uint64_t enum_cap = kDefaultEnumerationCap;
  AdaCoreConfig adacore;
  std::optional<Vector> init;  // starting point; default is the pseudo posterior mode

  void validate() const {
    if (iterations < 2) throw ValidationError("sampler: iterations must be >= 2");
    if (burn_in < 0 || burn_in >= iterations) {
      throw ValidationError("sampler: burn_in must be in [0, iterations)");
    }
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
      throw ValidationError("sampler: target_accept must be in (0, 1)");
    }
    if (fisher_refresh < 1) throw ValidationError("sampler: fisher_refresh must be >= 1");
    if (inner_gibbs_iters < 1) throw ValidationError("sampler: inner_gibbs_iters must be >= 1");
    if (!(adacore.xi > 0.0 && adacore.xi <= 1.0)) {
      throw ValidationError("sampler: adacore.xi must be in (0, 1]");
    }
  }
};

constexpr double kSigma2DefaultPseudo = 1.0;
constexpr double kSigma2DefaultExact = 1e-3;

// Inner Gibbs budget per DMH auxiliary regeneration, expressed in sweeps.
inline int dmh_inner_sweeps(const SamplerConfig& cfg, int n, int p) {
  double sweeps = double(cfg.inner_gibbs_iters) / (double(n) * p);
  return std::max(1, int(std::llround(sweeps)));
}

// One MCMC run. draws holds every iteration, burn-in included, on the theta
// scale; the core family additionally stores the rescaled chain in
// beta_draws, which is the corrected sample and what gets reported.
struct Chain {
  std::string method;
  Matrix draws;
  Matrix beta_draws;  // 0 x 0 outside the core family
  std::vector<std::uint8_t> accept_trace;
  Vector sigma2_trace;
  int burn_in = 0;
  double acceptance_rate = 0.0;  // over post burn-in iterations
  double wall_time_seconds = 0.0;
  Vector empirical_shift;  // empirical method only
  int rescaling_updates = 0;
  std::optional<RescalingMatrix> rescaling;
  std::vector<std::string> warnings;

  bool has_beta() const { return beta_draws.size() > 0; }
  const Matrix& reported() const { return has_beta() ? beta_draws : draws; }
  Matrix retained() const {
    const Matrix& m = reported();
    return m.bottomRows(m.rows() - burn_in);
  }
  Vector retained_column(int k) const {
    const Matrix& m = reported();
    return m.col(k).tail(m.rows() - burn_in);
  }
  int iterations() const { return static_cast<int>(draws.rows()); }
};

// Log target with gradient and a local preconditioner factor. fisher_factor
// returns lower-triangular R with R R' = (observed information)^-1 at x.
class Target {
 public:
  virtual ~Target() = default;
  virtual int dim() const = 0;
  virtual double log_density(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual ValueGradient value_and_gradient(const Vector& x) const {
    return {log_density(x), gradient(x)};
  }
  virtual Matrix fisher_factor(const Vector& x) const = 0;
};

class PseudoTarget : public Target {
 public:
  PseudoTarget(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior)
      : data_(data), spec_(spec), prior_(prior) {
    validate(data, spec);
    prior.validate();
  }

  int dim() const override { return spec_.dim(); }

  double log_density(const Vector& x) const override {
    return pseudo_log_likelihood(data_, spec_, x, &prior_);
  }

  Vector gradient(const Vector& x) const override {
    return pseudo_gradient(data_, spec_, x, &prior_);
  }

  ValueGradient value_and_gradient(const Vector& x) const override {
    return pseudo_value_and_gradient(data_, spec_, x, &prior_);
  }

  Matrix inverse_information(const Vector& x) const {
    PseudoDerivatives der = pseudo_score_and_curvature(data_, spec_, x);
    Matrix precision = -der.hessian;
    precision.diagonal() -= prior_eval(x, spec_, prior_).curvature_diag;
    return pd_inverse(precision, "pseudo observed information");
  }

  Matrix fisher_factor(const Vector& x) const override {
    return cholesky_lower(inverse_information(x), "pseudo inverse information");
  }

  const ModelSpec& spec() const { return spec_; }

 private:
  const Dataset& data_;
  ModelSpec spec_;
  PriorSpec prior_;
};

class ExactTarget : public Target {
 public:
  ExactTarget(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
              std::uint64_t cap = kDefaultEnumerationCap)
      : spec_(spec), prior_(prior), n_(data.n()), cap_(cap) {
    validate(data, spec);
    prior.validate();
    checked_state_count(spec, cap);
    s_obs_ = sufficient_statistics(data, spec, StatKind::full).values;
  }

  int dim() const override { return spec_.dim(); }

  double log_density(const Vector& x) const override {
    return s_obs_.dot(x) - n_ * log_partition_exact(x, spec_, cap_) +
           prior_eval(x, spec_, prior_).log_density;
  }

  Vector gradient(const Vector& x) const override {
    EnumeratedMoments mom = enumerate_moments(x, spec_, false, cap_);
    return s_obs_ - double(n_) * mom.stat_mean + prior_eval(x, spec_, prior_).gradient;
  }

  ValueGradient value_and_gradient(const Vector& x) const override {
    EnumeratedMoments mom = enumerate_moments(x, spec_, false, cap_);
    PriorEval pe = prior_eval(x, spec_, prior_);
    ValueGradient out;
    out.value = s_obs_.dot(x) - n_ * mom.log_partition + pe.log_density;
    out.gradient = s_obs_ - double(n_) * mom.stat_mean + pe.gradient;
    return out;
  }

  Matrix fisher_factor(const Vector& x) const override {
    EnumeratedMoments mom = enumerate_moments(x, spec_, true, cap_);
    Matrix precision = double(n_) * mom.stat_cov;
    precision.diagonal() -= prior_eval(x, spec_, prior_).curvature_diag;
    return cholesky_lower(pd_inverse(precision, "full-likelihood information"),
                          "full-likelihood inverse information");
  }

 private:
  ModelSpec spec_;
  PriorSpec prior_;
  int n_;
  std::uint64_t cap_;
  Vector s_obs_;
};

// Exponential-family target whose partition sum runs over the distinct
// observed states only. Coincides with ExactTarget when the data cover the
// whole state space.
class EmpiricalTarget : public Target {
 public:
  EmpiricalTarget(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior)
      : spec_(spec), prior_(prior), n_(data.n()) {
    validate(data, spec);
    prior.validate();
    s_obs_ = sufficient_statistics(data, spec, StatKind::full).values;
    stats_ = distinct_states(data, spec).stats;
  }

  int dim() const override { return spec_.dim(); }

  double log_density(const Vector& x) const override { return value_and_gradient(x).value; }

  Vector gradient(const Vector& x) const override { return value_and_gradient(x).gradient; }

  ValueGradient value_and_gradient(const Vector& x) const override {
    Vector energies = stats_ * x;
    double max_e = energies.maxCoeff();
    Vector w = (energies.array() - max_e).exp();
    double w_sum = w.sum();
    PriorEval pe = prior_eval(x, spec_, prior_);
    ValueGradient out;
    out.value = s_obs_.dot(x) - n_ * (max_e + std::log(w_sum)) + pe.log_density;
    Vector mean = stats_.transpose() * (w / w_sum);
    out.gradient = s_obs_ - double(n_) * mean + pe.gradient;
    return out;
  }

  Matrix fisher_factor(const Vector& x) const override {
    Vector energies = stats_ * x;
    double max_e = energies.maxCoeff();
    Vector w = (energies.array() - max_e).exp();
    w /= w.sum();
    Vector mean = stats_.transpose() * w;
    Matrix centered = stats_.rowwise() - mean.transpose();
    Matrix cov = centered.transpose() * w.asDiagonal() * centered;
    Matrix precision = double(n_) * cov;
    precision.diagonal() -= prior_eval(x, spec_, prior_).curvature_diag;
    return cholesky_lower(pd_inverse(precision, "restricted-support information"),
                          "restricted-support inverse information");
  }

 private:
  ModelSpec spec_;
  PriorSpec prior_;
  int n_;
  Vector s_obs_;
  Matrix stats_;
};

// Pseudo target seen through the affine rescaling map: the chain runs on
// beta = A (theta - theta_star) + theta_star, so its draws carry the
// corrected covariance directly. With the identity map every call forwards
// untransformed, which reproduces the plain pseudo sampler bit for bit.
class CoreTarget : public Target {
 public:
  CoreTarget(const PseudoTarget& base, RescalingMatrix rescaling)
      : base_(base), rescaling_(std::move(rescaling)) {}

  int dim() const override { return base_.dim(); }

  double log_density(const Vector& beta) const override {
    if (rescaling_.identity) return base_.log_density(beta);
    return base_.log_density(rescaling_.to_theta(beta));
  }

  Vector gradient(const Vector& beta) const override {
    if (rescaling_.identity) return base_.gradient(beta);
    return rescaling_.A_inv.transpose() * base_.gradient(rescaling_.to_theta(beta));
  }

  ValueGradient value_and_gradient(const Vector& beta) const override {
    if (rescaling_.identity) return base_.value_and_gradient(beta);
    ValueGradient vg = base_.value_and_gradient(rescaling_.to_theta(beta));
    vg.gradient = rescaling_.A_inv.transpose() * vg.gradient;
    return vg;
  }

  Matrix fisher_factor(const Vector& beta) const override {
    if (rescaling_.identity) return base_.fisher_factor(beta);
    Matrix cov_theta = base_.inverse_information(rescaling_.to_theta(beta));
    Matrix cov_beta = rescaling_.A * cov_theta * rescaling_.A.transpose();
    cov_beta = 0.5 * (cov_beta + cov_beta.transpose());
    return cholesky_lower(cov_beta, "rescaled inverse information");
  }

  const RescalingMatrix& rescaling() const { return rescaling_; }
  void set_rescaling(RescalingMatrix r) { rescaling_ = std::move(r); }

 private:
  const PseudoTarget& base_;
  RescalingMatrix rescaling_;
};

struct StepOutcome {
  bool accepted = false;
  double alpha = 0.0;
};

// Preconditioned MALA with proposal N(x + (sigma2/2) R R' grad, sigma2 R R').
// During burn-in sigma2 follows a Robbins-Monro recursion toward the target
// acceptance rate and R is refreshed from the target every fisher_refresh
// accepted moves; both freeze afterwards, so the post burn-in kernel is a
// fixed MH kernel.
class FisherMalaKernel {
 public:
  FisherMalaKernel(const Target& target, const Vector& init, double sigma2, double target_accept,
                   int refresh_every, std::uint64_t seed)
      : target_(target),
        rng_(seed),
        normal_(0.0, 1.0),
        unif_(0.0, 1.0),
        log_sigma2_(std::log(sigma2)),
        target_accept_(target_accept),
        refresh_every_(refresh_every) {
    state_.position = init;
    ValueGradient vg = target.value_and_gradient(init);
    state_.log_density = vg.value;
    state_.gradient = std::move(vg.gradient);
    if (!std::isfinite(state_.log_density) || !state_.gradient.allFinite()) {
      throw NumericalError("sampler initial state has non-finite log density or gradient");
    }
    R_ = target.fisher_factor(init);
  }

  struct State {
    Vector position;
    double log_density = 0.0;
    Vector gradient;
  };

  StepOutcome step(int iteration, bool adapt) {
    const int d = target_.dim();
    const double sigma2 = std::exp(log_sigma2_);
    Vector z(d);
    for (int i = 0; i < d; ++i) z[i] = normal_(rng_);
    Vector precond_grad = R_ * (R_.transpose() * state_.gradient);
    Vector mean_f = state_.position + 0.5 * sigma2 * precond_grad;
    Vector proposal = mean_f + std::sqrt(sigma2) * (R_ * z);

    StepOutcome out;
    ValueGradient vg = target_.value_and_gradient(proposal);
    if (std::isfinite(vg.value) && vg.gradient.allFinite()) {
      Vector mean_b = proposal + 0.5 * sigma2 * (R_ * (R_.transpose() * vg.gradient));
      // quadratic forms of the two proposal densities; shared constants cancel
      double q_f = R_.triangularView<Eigen::Lower>().solve(proposal - mean_f).squaredNorm();
      double q_b = R_.triangularView<Eigen::Lower>().solve(state_.position - mean_b).squaredNorm();
      double log_alpha = vg.value - state_.log_density + (q_f - q_b) / (2.0 * sigma2);
      out.alpha = std::min(1.0, std::exp(std::min(log_alpha, 0.0)));
      if (unif_(rng_) < out.alpha) {
        out.accepted = true;
        state_.position = std::move(proposal);
        state_.log_density = vg.value;
        state_.gradient = std::move(vg.gradient);
        ++accepted_total_;
        if (adapt && accepted_total_ % refresh_every_ == 0) {
          R_ = target_.fisher_factor(state_.position);
        }
      }
    }
    if (adapt) {
      log_sigma2_ += (out.alpha - target_accept_) / std::sqrt(double(iteration) + 1.0);
      log_sigma2_ = std::clamp(log_sigma2_, -40.0, 20.0);
    }
    return out;
  }

  // Moves the chain to an equivalent point after an external change of the
  // target (AdaCoRe map rebuild): re-evaluates density, gradient, and R.
  void reset_position(const Vector& position) {
    state_.position = position;
    ValueGradient vg = target_.value_and_gradient(position);
    state_.log_density = vg.value;
    state_.gradient = std::move(vg.gradient);
    R_ = target_.fisher_factor(position);
  }

  const State& state() const { return state_; }
  const Matrix& R() const { return R_; }
  double sigma2() const { return std::exp(log_sigma2_); }

 private:
  const Target& target_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> unif_;
  State state_;
  Matrix R_;
  double log_sigma2_;
  double target_accept_;
  int refresh_every_;
  long accepted_total_ = 0;
};

namespace detail {

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline Chain run_mala_positions(const Target& target, const Vector& init,
                                const SamplerConfig& cfg, const std::string& method,
                                double sigma2_default) {
  cfg.validate();
  double sigma2 = cfg.sigma2_init > 0.0 ? cfg.sigma2_init : sigma2_default;
  FisherMalaKernel kernel(target, init, sigma2, cfg.target_accept, cfg.fisher_refresh,
                          derive_seed(cfg.seed, 0));
  Chain chain;
  chain.method = method;
  chain.burn_in = cfg.burn_in;
  chain.draws.resize(cfg.iterations, target.dim());
  chain.accept_trace.resize(cfg.iterations);
  chain.sigma2_trace.resize(cfg.iterations);
  long accepted_post = 0;
  for (int s = 0; s < cfg.iterations; ++s) {
    StepOutcome res = kernel.step(s, s < cfg.burn_in);
    chain.draws.row(s) = kernel.state().position.transpose();
    chain.accept_trace[s] = res.accepted ? 1 : 0;
    chain.sigma2_trace[s] = kernel.sigma2();
    if (s >= cfg.burn_in) accepted_post += res.accepted;
  }
  chain.acceptance_rate = double(accepted_post) / double(cfg.iterations - cfg.burn_in);
  return chain;
}

inline Vector default_init(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                           const SamplerConfig& cfg) {
  if (cfg.init) {
    validate_theta(*cfg.init, spec);
    return *cfg.init;
  }
  return map_pseudo(data, spec, prior).theta_star;
}

// n x d matrix of per-row full-likelihood statistics.
inline Matrix row_statistics(const Dataset& data, const ModelSpec& spec) {
  Matrix out(data.n(), spec.dim());
  IntVector x(spec.p);
  for (int r = 0; r < data.n(); ++r) {
    x = data.values.row(r).transpose();
    out.row(r) = state_statistics(x, spec).transpose();
  }
  return out;
}

// Preconditioner for the DMH kernel: R R' = (n Cov_rows[s] + prior)^(-1)
// with the covariance taken over the rows of the current auxiliary set.
inline Matrix dmh_fisher_factor(const Dataset& aux, const ModelSpec& spec,
                                const PriorSpec& prior, const Vector& theta) {
  Matrix stats = row_statistics(aux, spec);
  Vector mean = stats.colwise().mean().transpose();
  Matrix centered = stats.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / double(aux.n() - 1);
  Matrix precision = double(aux.n()) * cov;
  precision.diagonal() -= prior_eval(theta, spec, prior).curvature_diag;
  return cholesky_lower(pd_inverse(precision, "auxiliary-draw information"),
                        "auxiliary-draw inverse information");
}

}  // namespace detail

// Half-sample mode: repeatedly keep the shortest half of the sorted sample.
inline double half_sample_mode(std::vector<double> values) {
  if (values.empty()) throw ValidationError("half_sample_mode: empty input");
  std::sort(values.begin(), values.end());
  std::size_t lo = 0, n = values.size();
  while (n > 3) {
    std::size_t h = (n + 1) / 2;
    std::size_t best = lo;
    double best_width = values[lo + h - 1] - values[lo];
    for (std::size_t i = lo + 1; i + h - 1 < lo + n; ++i) {
      double w = values[i + h - 1] - values[i];
      if (w < best_width) {
        best_width = w;
        best = i;
      }
    }
    lo = best;
    n = h;
  }
  if (n == 1) return values[lo];
  if (n == 2) return 0.5 * (values[lo] + values[lo + 1]);
  double d1 = values[lo + 1] - values[lo];
  double d2 = values[lo + 2] - values[lo + 1];
  if (d1 < d2) return 0.5 * (values[lo] + values[lo + 1]);
  if (d2 < d1) return 0.5 * (values[lo + 1] + values[lo + 2]);
  return values[lo + 1];
}

inline Chain sample_pseudo(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                           const SamplerConfig& cfg) {
  detail::WallTimer timer;
  Vector init = detail::default_init(data, spec, prior, cfg);
  PseudoTarget target(data, spec, prior);
  Chain chain = detail::run_mala_positions(target, init, cfg, "pseudo", kSigma2DefaultPseudo);
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

inline Chain sample_exact(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                          const SamplerConfig& cfg) {
  detail::WallTimer timer;
  Vector init = detail::default_init(data, spec, prior, cfg);
  ExactTarget target(data, spec, prior, cfg.enum_cap);
  Chain chain = detail::run_mala_positions(target, init, cfg, "exact", kSigma2DefaultExact);
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

// Restricted-support sampler with post-hoc recentering: after the run every
// draw is shifted so the per-coordinate half-sample mode of the retained
// draws lands on the pseudo posterior mode.
inline Chain sample_empirical(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                              const SamplerConfig& cfg) {
  detail::WallTimer timer;
  Vector pseudo_mode = map_pseudo(data, spec, prior).theta_star;
  Vector init = cfg.init ? *cfg.init : pseudo_mode;
  EmpiricalTarget target(data, spec, prior);
  Chain chain = detail::run_mala_positions(target, init, cfg, "empirical", kSigma2DefaultPseudo);
  const int d = spec.dim();
  const int retained = chain.iterations() - chain.burn_in;
  Vector shift(d);
  std::vector<double> column(retained);
  for (int k = 0; k < d; ++k) {
    for (int s = 0; s < retained; ++s) column[s] = chain.draws(chain.burn_in + s, k);
    shift[k] = pseudo_mode[k] - half_sample_mode(column);
  }
  chain.draws.rowwise() += shift.transpose();
  chain.empirical_shift = shift;
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

// Coordinate-rescaled sampler with a fixed map. The chain runs on the beta
// scale; the theta trace is recovered through the inverse map, so theta
// draws follow the pseudo posterior and beta draws the corrected one.
inline Chain sample_core(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                         const RescalingMatrix& rescaling, const SamplerConfig& cfg,
                         const std::string& method = "core") {
  detail::WallTimer timer;
  Vector init = detail::default_init(data, spec, prior, cfg);
  PseudoTarget base(data, spec, prior);
  CoreTarget target(base, rescaling);
  Vector beta0 = rescaling.to_beta(init);
  Chain chain = detail::run_mala_positions(target, beta0, cfg, method, kSigma2DefaultPseudo);
  chain.beta_draws = chain.draws;
  if (!rescaling.identity) {
    for (int s = 0; s < chain.iterations(); ++s) {
      chain.draws.row(s) = rescaling.to_theta(chain.beta_draws.row(s).transpose()).transpose();
    }
  }
  chain.rescaling = rescaling;
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

// Adaptive variant: during burn-in a drift statistic compares the kernel
// preconditioner against its snapshot at the last map rebuild; when its EMA
// exceeds tau the map is rebuilt at the running mean of the burn-in theta
// draws. The map, step size, and preconditioner all freeze at burn-in.
inline Chain sample_adacore(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                            const SamplerConfig& cfg) {
  detail::WallTimer timer;
  cfg.validate();
  Vector init = detail::default_init(data, spec, prior, cfg);
  RescalingMatrix initial = build_rescaling(data, spec, init, prior, RescalingVariant::GHW);
  PseudoTarget base(data, spec, prior);
  CoreTarget target(base, initial);
  const int d = spec.dim();
  double sigma2 = cfg.sigma2_init > 0.0 ? cfg.sigma2_init : kSigma2DefaultPseudo;
  FisherMalaKernel kernel(target, initial.to_beta(init), sigma2, cfg.target_accept,
                          cfg.fisher_refresh, derive_seed(cfg.seed, 0));

  Chain chain;
  chain.method = "adacore";
  chain.burn_in = cfg.burn_in;
  chain.draws.resize(cfg.iterations, d);
  chain.beta_draws.resize(cfg.iterations, d);
  chain.accept_trace.resize(cfg.iterations);
  chain.sigma2_trace.resize(cfg.iterations);

  Matrix r_ref = kernel.R();
  Vector cumulative = Vector::Zero(d);
  long count = 0;
  double ema = 0.0;
  const double tau = cfg.adacore.resolve_tau(data.n());
  long accepted_post = 0;

  for (int s = 0; s < cfg.iterations; ++s) {
    const bool adapt = s < cfg.burn_in;
    if (adapt) {
      Vector theta_now = target.rescaling().to_theta(kernel.state().position);
      cumulative += theta_now;
      ++count;
      if (s >= 1) {
        double delta = (kernel.R() - r_ref).norm() / (r_ref.norm() + cfg.adacore.epsilon);
        ema = (1.0 - cfg.adacore.xi) * ema + cfg.adacore.xi * delta;
        if (ema > tau) {
          Vector running_mean = cumulative / double(count);
          try {
            RescalingMatrix next = update_rescaling(running_mean, data, spec, prior);
            target.set_rescaling(std::move(next));
            kernel.reset_position(target.rescaling().to_beta(theta_now));
            r_ref = kernel.R();
            ++chain.rescaling_updates;
          } catch (const NumericalError& err) {
            chain.warnings.push_back(std::string("rescaling update skipped: ") + err.what());
          }
          ema = 0.0;
        }
      }
    }
    StepOutcome res = kernel.step(s, adapt);
    Vector beta_now = kernel.state().position;
    chain.beta_draws.row(s) = beta_now.transpose();
    chain.draws.row(s) = target.rescaling().to_theta(beta_now).transpose();
    chain.accept_trace[s] = res.accepted ? 1 : 0;
    chain.sigma2_trace[s] = kernel.sigma2();
    if (!adapt) accepted_post += res.accepted;
  }
  chain.acceptance_rate = double(accepted_post) / double(cfg.iterations - cfg.burn_in);
  chain.rescaling = target.rescaling();
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

// Double Metropolis-Hastings with the preconditioned-MALA proposal. Each
// iteration regenerates an auxiliary dataset at the proposed point by inner
// Gibbs started from the observed data; the auxiliary statistics stand in
// for both the partition-function ratio and the likelihood gradient. The
// gradient entering the acceptance ratio uses the current auxiliary set at
// both endpoints, so proposing theta' = theta accepts with probability one.
inline Chain sample_dmh(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                        const SamplerConfig& cfg) {
  detail::WallTimer timer;
  cfg.validate();
  const int d = spec.dim();
  const int n = data.n();
  const int sweeps = dmh_inner_sweeps(cfg, n, spec.p);
  Vector theta = detail::default_init(data, spec, prior, cfg);
  Vector s_obs = sufficient_statistics(data, spec, StatKind::full).values;

  auto regenerate = [&](const Vector& at, std::uint64_t stream) {
    return gibbs_synthesize(at, spec, n, sweeps, data, derive_seed(cfg.seed, stream + 1));
  };

  Dataset aux = regenerate(theta, 0);
  Vector s_aux = sufficient_statistics(aux, spec, StatKind::full).values;
  PriorEval prior_cur = prior_eval(theta, spec, prior);
  Vector grad_cached = s_obs - s_aux + prior_cur.gradient;
  Matrix R = detail::dmh_fisher_factor(aux, spec, prior, theta);

  double log_sigma2 = std::log(cfg.sigma2_init > 0.0 ? cfg.sigma2_init : kSigma2DefaultExact);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Chain chain;
  chain.method = "dmh";
  chain.burn_in = cfg.burn_in;
  chain.draws.resize(cfg.iterations, d);
  chain.accept_trace.resize(cfg.iterations);
  chain.sigma2_trace.resize(cfg.iterations);
  long accepted_post = 0;
  long accepted_total = 0;

  for (int s = 0; s < cfg.iterations; ++s) {
    const bool adapt = s < cfg.burn_in;
    const double sigma2 = std::exp(log_sigma2);
    Vector z(d);
    for (int i = 0; i < d; ++i) z[i] = normal(rng);
    Vector mean_draw = theta + 0.5 * sigma2 * (R * (R.transpose() * grad_cached));
    Vector proposal = mean_draw + std::sqrt(sigma2) * (R * z);

    double alpha = 0.0;
    bool accepted = false;
    if (proposal.allFinite()) {
      Dataset aux_new = regenerate(proposal, std::uint64_t(s) + 1);
      Vector s_new = sufficient_statistics(aux_new, spec, StatKind::full).values;
      PriorEval prior_prop = prior_eval(proposal, spec, prior);
      Vector grad_f = s_obs - s_new + prior_cur.gradient;
      Vector grad_b = s_obs - s_new + prior_prop.gradient;
      Vector mean_f = theta + 0.5 * sigma2 * (R * (R.transpose() * grad_f));
      Vector mean_b = proposal + 0.5 * sigma2 * (R * (R.transpose() * grad_b));
      double q_f = R.triangularView<Eigen::Lower>().solve(proposal - mean_f).squaredNorm();
      double q_b = R.triangularView<Eigen::Lower>().solve(theta - mean_b).squaredNorm();
      double log_alpha = s_obs.dot(proposal - theta) + s_new.dot(theta - proposal) +
                         prior_prop.log_density - prior_cur.log_density +
                         (q_f - q_b) / (2.0 * sigma2);
      alpha = std::min(1.0, std::exp(std::min(log_alpha, 0.0)));
      if (unif(rng) < alpha) {
        accepted = true;
        theta = proposal;
        prior_cur = prior_prop;
        grad_cached = grad_b;
        ++accepted_total;
        if (adapt && accepted_total % cfg.fisher_refresh == 0) {
          R = detail::dmh_fisher_factor(aux_new, spec, prior, theta);
        }
      }
    }
    if (adapt) {
      log_sigma2 += (alpha - cfg.target_accept) / std::sqrt(double(s) + 1.0);
      log_sigma2 = std::clamp(log_sigma2, -40.0, 20.0);
    }
    chain.draws.row(s) = theta.transpose();
    chain.accept_trace[s] = accepted ? 1 : 0;
    chain.sigma2_trace[s] = std::exp(log_sigma2);
    if (!adapt) accepted_post += accepted;
  }
  chain.acceptance_rate = double(accepted_post) / double(cfg.iterations - cfg.burn_in);
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

// Adaptive-proposal DMH: random-walk proposals whose covariance blends the
// sandwich covariance at the pseudo mode with the running covariance of the
// past draws, scaled by 2.38^2/d. No gradient enters the proposal.
inline Chain sample_adadmh(const Dataset& data, const ModelSpec& spec, const PriorSpec& prior,
                           const SamplerConfig& cfg) {
  detail::WallTimer timer;
  cfg.validate();
  const int d = spec.dim();
  const int n = data.n();
  const int sweeps = dmh_inner_sweeps(cfg, n, spec.p);
  Vector theta = detail::default_init(data, spec, prior, cfg);
  Vector s_obs = sufficient_statistics(data, spec, StatKind::full).values;
  CurvatureBundle bundle = curvature_bundle(data, spec, theta, prior);
  Matrix sigma_ghw = ghw_covariance(bundle);
  const double scale = 2.38 * 2.38 / double(d);

  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PriorEval prior_cur = prior_eval(theta, spec, prior);

  // Welford accumulators over past draws
  Vector run_mean = Vector::Zero(d);
  Matrix run_m2 = Matrix::Zero(d, d);
  long run_count = 0;
  auto welford_add = [&](const Vector& x) {
    ++run_count;
    Vector delta = x - run_mean;
    run_mean += delta / double(run_count);
    run_m2 += delta * (x - run_mean).transpose();
  };

  Matrix proposal_chol = cholesky_lower(
      Matrix(scale * (sigma_ghw + 1e-8 * Matrix::Identity(d, d))), "proposal covariance");

  Chain chain;
  chain.method = "adadmh";
  chain.burn_in = cfg.burn_in;
  chain.draws.resize(cfg.iterations, d);
  chain.accept_trace.resize(cfg.iterations);
  chain.sigma2_trace.resize(cfg.iterations);
  long accepted_post = 0;

  for (int s = 0; s < cfg.iterations; ++s) {
    const bool adapt = s < cfg.burn_in;
    if (adapt && run_count >= 2) {
      double lambda = std::min(1.0, double(s) / double(cfg.burn_in));
      Matrix blended = (1.0 - lambda) * sigma_ghw + lambda * (run_m2 / double(run_count - 1));
      blended.diagonal().array() += 1e-8;
      proposal_chol = cholesky_lower(Matrix(scale * blended), "proposal covariance");
    }
    Vector z(d);
    for (int i = 0; i < d; ++i) z[i] = normal(rng);
    Vector proposal = theta + proposal_chol * z;
    double alpha = 0.0;
    bool accepted = false;
    if (proposal.allFinite()) {
      Dataset aux = gibbs_synthesize(proposal, spec, n, sweeps,
                                     data, derive_seed(cfg.seed, std::uint64_t(s) + 1));
      Vector s_aux = sufficient_statistics(aux, spec, StatKind::full).values;
      PriorEval prior_prop = prior_eval(proposal, spec, prior);
      double log_alpha = s_obs.dot(proposal - theta) + s_aux.dot(theta - proposal) +
                         prior_prop.log_density - prior_cur.log_density;
      alpha = std::min(1.0, std::exp(std::min(log_alpha, 0.0)));
      if (unif(rng) < alpha) {
        accepted = true;
        theta = proposal;
        prior_cur = prior_prop;
      }
    }
    if (adapt) welford_add(theta);
    chain.draws.row(s) = theta.transpose();
    chain.accept_trace[s] = accepted ? 1 : 0;
    chain.sigma2_trace[s] = scale;
    if (!adapt) accepted_post += accepted;
  }
  chain.acceptance_rate = double(accepted_post) / double(cfg.iterations - cfg.burn_in);
  chain.wall_time_seconds = timer.seconds();
  return chain;
}

}  // namespace omrf
