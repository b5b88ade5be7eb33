#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "omrf/gibbs.hpp"
#include "omrf/model.hpp"

namespace omrf {

// Undirected edge set over the p variables. Interactions outside the edge
// set are pinned to zero during constrained estimation.
struct GraphStructure {
  int p = 0;
  std::set<std::pair<int, int>> edges;  // stored with i < j

  static GraphStructure full(int p) {
    GraphStructure g;
    g.p = p;
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) g.edges.insert({i, j});
    }
    return g;
  }

  void add_edge(int i, int j) {
    if (i == j) throw ValidationError("structure: self loop on variable " + std::to_string(i));
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= p) throw ValidationError("structure: edge endpoint out of range");
    edges.insert({i, j});
  }

  bool has_edge(int i, int j) const {
    if (i > j) std::swap(i, j);
    return edges.count({i, j}) > 0;
  }

  int n_edges() const { return static_cast<int>(edges.size()); }
};

// Indices of parameters left free under the structure: all thresholds plus
// interactions with a present edge. Null structure means fully free.
inline std::vector<int> free_indices(const ModelSpec& spec, const GraphStructure* structure) {
  std::vector<int> idx;
  idx.reserve(spec.dim());
  for (int k = 0; k < spec.n_thresholds(); ++k) idx.push_back(k);
  for (int k = spec.n_thresholds(); k < spec.dim(); ++k) {
    auto [i, j] = spec.decode_interaction(k);
    if (!structure || structure->has_edge(i, j)) idx.push_back(k);
  }
  return idx;
}

struct EstimateResult {
  Vector theta_star;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  std::string message;
  std::vector<std::string> warnings;
};

struct NewtonOptions {
  double gradient_tol = 1e-8;
  int max_iterations = 200;
  double armijo_c = 1e-4;
  double min_step = 1e-12;
};

// On separated data the unpenalized pseudo likelihood has its supremum at
// infinity, and the gradient still crosses the tolerance once the
// conditionals saturate (magnitudes beyond ~22 for the default tolerance).
// Any unpenalized fit beyond this magnitude is treated as separation.
constexpr double kSeparationMagnitude = 15.0;

// Maximum pseudo-likelihood estimation (MAP when a prior is supplied) by
// Newton ascent with Armijo backtracking. The pseudo log likelihood is
// concave, and the prior only adds negative curvature, so the Newton
// direction is always an ascent direction.
inline EstimateResult mple(const Dataset& data, const ModelSpec& spec,
                           const GraphStructure* structure = nullptr,
                           const PriorSpec* prior = nullptr, const NewtonOptions& opts = {}) {
  validate(data, spec);
  if (structure && structure->p != spec.p) {
    throw ValidationError("structure is over " + std::to_string(structure->p) +
                          " variables but the model has " + std::to_string(spec.p));
  }
  const int d = spec.dim();
  std::vector<int> free_idx = free_indices(spec, structure);
  const int df = static_cast<int>(free_idx.size());

  Vector theta = Vector::Zero(d);
  EstimateResult out;
  double value = pseudo_log_likelihood(data, spec, theta, prior);

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    PseudoDerivatives der = pseudo_score_and_curvature(data, spec, theta);
    Vector grad = der.gradient;
    Matrix hess = der.hessian;
    if (prior) {
      PriorEval pe = prior_eval(theta, spec, *prior);
      grad += pe.gradient;
      hess.diagonal() += pe.curvature_diag;
    }
    Vector g_free(df);
    Matrix h_free(df, df);
    for (int a = 0; a < df; ++a) {
      g_free[a] = grad[free_idx[a]];
      for (int b = 0; b < df; ++b) h_free(a, b) = hess(free_idx[a], free_idx[b]);
    }
    out.iterations = iter;
    out.final_gradient_norm = g_free.norm();
    if (out.final_gradient_norm <= opts.gradient_tol) {
      out.converged = true;
      out.message = "gradient norm below tolerance";
      break;
    }
    Eigen::LDLT<Matrix> ldlt(-h_free);
    Vector step = ldlt.solve(g_free);
    if (!step.allFinite() || ldlt.info() != Eigen::Success) {
      out.message = "Newton system could not be solved";
      break;
    }
    double slope = g_free.dot(step);
    if (slope <= 0.0) {
      out.message = "Newton direction is not an ascent direction";
      break;
    }
    double t = 1.0;
    bool moved = false;
    Vector trial = theta;
    // Below this the predicted Armijo decrease is invisible in the stored
    // objective, so acceptance falls back to a strict gradient-norm
    // decrease and lets Newton finish the contraction.
    const double value_noise =
        64.0 * std::numeric_limits<double>::epsilon() * (std::abs(value) + 1.0);
    while (t >= opts.min_step) {
      for (int a = 0; a < df; ++a) trial[free_idx[a]] = theta[free_idx[a]] + t * step[a];
      double trial_value = pseudo_log_likelihood(data, spec, trial, prior);
      if (std::isfinite(trial_value)) {
        bool accept;
        if (opts.armijo_c * t * slope > value_noise) {
          accept = trial_value >= value + opts.armijo_c * t * slope;
        } else {
          Vector trial_grad = pseudo_gradient(data, spec, trial, prior);
          double norm2 = 0.0;
          for (int a = 0; a < df; ++a) {
            norm2 += trial_grad[free_idx[a]] * trial_grad[free_idx[a]];
          }
          accept = std::sqrt(norm2) < out.final_gradient_norm;
        }
        if (accept) {
          theta = trial;
          value = trial_value;
          moved = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!moved) {
      out.message = "line search failed; likelihood may be unbounded (separation)";
      break;
    }
  }
  if (!out.converged && out.message.empty()) {
    out.message = "iteration limit reached";
  }
  if (out.converged && !prior && theta.lpNorm<Eigen::Infinity>() > kSeparationMagnitude) {
    out.converged = false;
    out.message =
        "gradient vanished at an extreme parameter magnitude; the optimum may be "
        "at infinity (separated data)";
  }
  if (!out.converged) {
    out.warnings.push_back("estimation did not converge: " + out.message);
  }
  out.theta_star = std::move(theta);
  return out;
}

// Posterior mode of the pseudo posterior. The prior makes the objective
// strictly concave, so this always has a unique optimum.
inline EstimateResult map_pseudo(const Dataset& data, const ModelSpec& spec,
                                 const PriorSpec& prior, const NewtonOptions& opts = {}) {
  return mple(data, spec, nullptr, &prior, opts);
}

struct RobbinsMonroOptions {
  int iterations = 200;
  double a0 = 0.0;          // <= 0 means 1/n
  double offset = 100.0;    // the A in a_k = a0 / (k + A)
  std::vector<double> schedule;  // overrides (a0, offset) when nonempty
  int mc_samples = 500;     // synthetic rows per gradient estimate
  int sweeps = 10;
  double divergence_norm = 1e3;
  std::uint64_t seed = 1;
};

// Stochastic approximation of the full-likelihood posterior mode:
// theta_{k+1} = theta_k + a_k (s(X) - s(Y_k) + grad log prior), with Y_k a
// Gibbs-synthesized dataset at theta_k initialized from the observed rows.
inline EstimateResult robbins_monro(const Dataset& data, const ModelSpec& spec,
                                    const PriorSpec& prior, const Vector& init,
                                    const RobbinsMonroOptions& opts = {}) {
  validate(data, spec);
  validate_theta(init, spec);
  const int n = data.n();
  const double a0 = opts.a0 > 0.0 ? opts.a0 : 1.0 / n;
  const int iterations =
      opts.schedule.empty() ? opts.iterations : static_cast<int>(opts.schedule.size());
  Vector s_obs = sufficient_statistics(data, spec, StatKind::full).values;
  Vector theta = init;
  EstimateResult out;
  out.converged = true;
  for (int k = 0; k < iterations; ++k) {
    double a_k = opts.schedule.empty() ? a0 / (k + 1 + opts.offset) : opts.schedule[k];
    if (a_k != 0.0) {
      Dataset y = gibbs_synthesize(theta, spec, opts.mc_samples, opts.sweeps, data,
                                   derive_seed(opts.seed, static_cast<std::uint64_t>(k)));
      Vector s_mc = sufficient_statistics(y, spec, StatKind::full).values;
      Vector drift = s_obs - (double(n) / opts.mc_samples) * s_mc +
                     prior_eval(theta, spec, prior).gradient;
      theta += a_k * drift;
    }
    out.iterations = k + 1;
    if (!theta.allFinite() || theta.norm() > opts.divergence_norm) {
      out.converged = false;
      out.message = "iterate diverged at step " + std::to_string(k + 1);
      out.warnings.push_back(out.message);
      break;
    }
  }
  if (out.converged) out.message = "completed " + std::to_string(out.iterations) + " steps";
  out.theta_star = std::move(theta);
  return out;
}

struct MonteCarloHessian {
  Matrix value;  // -n * Cov_MC[s(X)], the estimated full-likelihood Hessian
  std::vector<std::string> warnings;
};

struct MonteCarloHessianOptions {
  int sweeps = 100;  // after the fixed random-init burn-in
  std::uint64_t seed = 1;
};

// Monte Carlo estimate of the joint log-likelihood Hessian at theta_star,
// -n Cov[s], from Gibbs draws started at uniform-random states.
inline MonteCarloHessian monte_carlo_hessian(const Vector& theta_star, const ModelSpec& spec,
                                             int n, int mc_samples,
                                             const MonteCarloHessianOptions& opts = {}) {
  validate_theta(theta_star, spec);
  if (n < 1) throw ValidationError("monte_carlo_hessian: n must be >= 1");
  if (mc_samples < 2) throw ValidationError("monte_carlo_hessian: mc_samples must be >= 2");
  MonteCarloHessian out;
  if (mc_samples < 2 * spec.dim()) {
    out.warnings.push_back("monte_carlo_hessian: mc_samples = " + std::to_string(mc_samples) +
                           " is below 2*dim = " + std::to_string(2 * spec.dim()) +
                           "; the covariance estimate may be unstable");
  }
  Dataset y = gibbs_synthesize_random_init(theta_star, spec, mc_samples, opts.sweeps, opts.seed);
  Matrix stats(mc_samples, spec.dim());
  IntVector x(spec.p);
  for (int r = 0; r < mc_samples; ++r) {
    x = y.values.row(r).transpose();
    stats.row(r) = state_statistics(x, spec).transpose();
  }
  Vector mean = stats.colwise().mean().transpose();
  Matrix centered = stats.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / double(mc_samples - 1);
  out.value = -double(n) * cov;
  return out;
}

}  // namespace omrf
