#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "omrf/common.hpp"

namespace omrf {

// Ordinal Markov random field with p variables taking values 0..m.
// Parameters: category thresholds mu(i,h) for h = 1..m (mu(i,0) fixed at 0)
// and pairwise interactions theta(i,j) for i < j, acting on x_i * x_j.
struct ModelSpec {
  int p = 0;  // number of variables, >= 2
  int m = 1;  // highest category, >= 1 (m = 1 is the binary case)

  int dim() const { return p * m + p * (p - 1) / 2; }
  int n_thresholds() const { return p * m; }
  int n_interactions() const { return p * (p - 1) / 2; }

  void validate() const {
    if (p < 2) throw ValidationError("ModelSpec: p must be >= 2, got " + std::to_string(p));
    if (m < 1) throw ValidationError("ModelSpec: m must be >= 1, got " + std::to_string(m));
  }

  // h in 1..m
  int threshold_index(int i, int h) const { return i * m + (h - 1); }

  // unordered pair, i != j
  int interaction_index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return p * m + i * p - i * (i + 1) / 2 + (j - i - 1);
  }

  bool is_threshold(int k) const { return k < p * m; }

  // inverse of threshold_index: returns (variable, category)
  std::pair<int, int> decode_threshold(int k) const { return {k / m, k % m + 1}; }

  // inverse of interaction_index: returns (i, j) with i < j
  std::pair<int, int> decode_interaction(int k) const {
    int r = k - p * m;
    int i = 0;
    while (r >= p - 1 - i) {
      r -= p - 1 - i;
      ++i;
    }
    return {i, i + 1 + r};
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    names.reserve(dim());
    for (int k = 0; k < n_thresholds(); ++k) {
      auto [i, h] = decode_threshold(k);
      names.push_back("mu_" + std::to_string(i + 1) + "_" + std::to_string(h));
    }
    for (int k = n_thresholds(); k < dim(); ++k) {
      auto [i, j] = decode_interaction(k);
      names.push_back("theta_" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    }
    return names;
  }
};

// Observation matrix, n rows by p columns, entries in 0..m.
struct Dataset {
  IntMatrix values;

  int n() const { return static_cast<int>(values.rows()); }
  int p() const { return static_cast<int>(values.cols()); }
};

inline void validate(const Dataset& data, const ModelSpec& spec) {
  spec.validate();
  if (data.p() != spec.p) {
    throw ValidationError("dataset has " + std::to_string(data.p()) +
                          " columns but the model expects " + std::to_string(spec.p));
  }
  if (data.n() < 1) throw ValidationError("dataset has no rows");
  for (int r = 0; r < data.n(); ++r) {
    for (int c = 0; c < data.p(); ++c) {
      int v = data.values(r, c);
      if (v < 0 || v > spec.m) {
        throw ValidationError("dataset entry (" + std::to_string(r) + "," + std::to_string(c) +
                              ") = " + std::to_string(v) + " outside 0.." + std::to_string(spec.m));
      }
    }
  }
}

inline void validate_theta(const ParamVector& theta, const ModelSpec& spec) {
  if (theta.size() != spec.dim()) {
    throw ValidationError("parameter vector has length " + std::to_string(theta.size()) +
                          " but the model dimension is " + std::to_string(spec.dim()));
  }
  if (!theta.allFinite()) throw ValidationError("parameter vector contains non-finite entries");
}

// Symmetric p x p interaction matrix with zero diagonal, unpacked from theta.
inline Matrix interaction_matrix(const ParamVector& theta, const ModelSpec& spec) {
  Matrix T = Matrix::Zero(spec.p, spec.p);
  for (int i = 0; i < spec.p; ++i) {
    for (int j = i + 1; j < spec.p; ++j) {
      double v = theta[spec.interaction_index(i, j)];
      T(i, j) = v;
      T(j, i) = v;
    }
  }
  return T;
}

enum class StatKind { full, pseudo };

// Sufficient statistic of the dataset. kind == full pairs with the joint
// likelihood; kind == pseudo pairs with the pseudo-likelihood, whose
// interaction statistics are doubled because each pair appears in two
// full conditionals.
struct SuffStats {
  Vector values;
  StatKind kind = StatKind::full;
};

inline SuffStats sufficient_statistics(const Dataset& data, const ModelSpec& spec,
                                       StatKind kind = StatKind::full) {
  validate(data, spec);
  Vector s = Vector::Zero(spec.dim());
  const double pair_weight = (kind == StatKind::pseudo) ? 2.0 : 1.0;
  for (int r = 0; r < data.n(); ++r) {
    for (int i = 0; i < spec.p; ++i) {
      int xi = data.values(r, i);
      if (xi > 0) s[spec.threshold_index(i, xi)] += 1.0;
      for (int j = i + 1; j < spec.p; ++j) {
        int xj = data.values(r, j);
        if (xi > 0 && xj > 0) {
          s[spec.interaction_index(i, j)] += pair_weight * xi * xj;
        }
      }
    }
  }
  return {std::move(s), kind};
}

// Full-likelihood sufficient statistic of a single state.
inline Vector state_statistics(const IntVector& x, const ModelSpec& spec) {
  Vector s = Vector::Zero(spec.dim());
  for (int i = 0; i < spec.p; ++i) {
    if (x[i] > 0) s[spec.threshold_index(i, x[i])] = 1.0;
    for (int j = i + 1; j < spec.p; ++j) {
      if (x[i] > 0 && x[j] > 0) s[spec.interaction_index(i, j)] = double(x[i]) * x[j];
    }
  }
  return s;
}

constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t(1) << 24;

// Number of joint states (m+1)^p, guarded against the enumeration cap.
// The cap is exclusive: enumeration needs strictly fewer states than cap.
inline std::uint64_t checked_state_count(const ModelSpec& spec, std::uint64_t cap) {
  long double approx = std::pow(static_cast<long double>(spec.m + 1), spec.p);
  if (approx >= static_cast<long double>(cap)) {
    throw CapacityError("state space (m+1)^p = " + std::to_string(spec.m + 1) + "^" +
                        std::to_string(spec.p) + " reaches the enumeration cap " +
                        std::to_string(cap) +
                        "; use the pseudo, core, or dmh methods instead of exact enumeration");
  }
  std::uint64_t count = 1;
  for (int i = 0; i < spec.p; ++i) count *= static_cast<std::uint64_t>(spec.m + 1);
  return count;
}

namespace detail {

// Depth-first walk over all (m+1)^p states. The unnormalized log mass is
// accumulated along the path, so the leaf callback receives it for free.
// leaf(x, energy) with energy = sum_i mu(i, x_i) + sum_{i<j} theta_ij x_i x_j.
template <typename Leaf>
void for_each_state(const ParamVector& theta, const ModelSpec& spec, Leaf&& leaf) {
  IntVector x = IntVector::Zero(spec.p);
  auto rec = [&](auto&& self, int depth, double energy) -> void {
    if (depth == spec.p) {
      leaf(static_cast<const IntVector&>(x), energy);
      return;
    }
    double slope = 0.0;  // sum_{j<depth} theta(j,depth) x_j
    for (int j = 0; j < depth; ++j) {
      if (x[j] > 0) slope += theta[spec.interaction_index(j, depth)] * x[j];
    }
    for (int c = 0; c <= spec.m; ++c) {
      x[depth] = c;
      double e = energy;
      if (c > 0) e += theta[spec.threshold_index(depth, c)] + c * slope;
      self(self, depth + 1, e);
    }
  };
  rec(rec, 0, 0.0);
}

}  // namespace detail

// log Z(theta) by streaming logsumexp over the full state space.
inline double log_partition_exact(const ParamVector& theta, const ModelSpec& spec,
                                  std::uint64_t cap = kDefaultEnumerationCap) {
  validate_theta(theta, spec);
  checked_state_count(spec, cap);
  double max_e = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  detail::for_each_state(theta, spec, [&](const IntVector&, double e) {
    if (e <= max_e) {
      sum += std::exp(e - max_e);
    } else {
      sum = sum * std::exp(max_e - e) + 1.0;
      max_e = e;
    }
  });
  return max_e + std::log(sum);
}

// Exact moments of the sufficient statistic under theta.
struct EnumeratedMoments {
  double log_partition = 0.0;
  Vector stat_mean;      // E[s(X)]
  Matrix stat_cov;       // Cov[s(X)], filled when requested
  bool has_cov = false;
};

inline EnumeratedMoments enumerate_moments(const ParamVector& theta, const ModelSpec& spec,
                                           bool want_covariance = false,
                                           std::uint64_t cap = kDefaultEnumerationCap) {
  validate_theta(theta, spec);
  checked_state_count(spec, cap);
  const int d = spec.dim();
  double max_e = -std::numeric_limits<double>::infinity();
  double w_sum = 0.0;
  Vector acc1 = Vector::Zero(d);
  Matrix acc2 = want_covariance ? Matrix::Zero(d, d) : Matrix();
  std::vector<int> nz_idx(d);
  std::vector<double> nz_val(d);
  detail::for_each_state(theta, spec, [&](const IntVector& x, double e) {
    if (e > max_e) {
      double scale = std::exp(max_e - e);
      w_sum *= scale;
      acc1 *= scale;
      if (want_covariance) acc2 *= scale;
      max_e = e;
    }
    double w = std::exp(e - max_e);
    w_sum += w;
    int nnz = 0;
    for (int i = 0; i < spec.p; ++i) {
      if (x[i] > 0) {
        nz_idx[nnz] = spec.threshold_index(i, x[i]);
        nz_val[nnz++] = 1.0;
      }
      for (int j = i + 1; j < spec.p; ++j) {
        if (x[i] > 0 && x[j] > 0) {
          nz_idx[nnz] = spec.interaction_index(i, j);
          nz_val[nnz++] = double(x[i]) * x[j];
        }
      }
    }
    for (int a = 0; a < nnz; ++a) acc1[nz_idx[a]] += w * nz_val[a];
    if (want_covariance) {
      for (int a = 0; a < nnz; ++a) {
        double wa = w * nz_val[a];
        for (int b = 0; b < nnz; ++b) acc2(nz_idx[a], nz_idx[b]) += wa * nz_val[b];
      }
    }
  });
  EnumeratedMoments out;
  out.log_partition = max_e + std::log(w_sum);
  out.stat_mean = acc1 / w_sum;
  if (want_covariance) {
    out.stat_cov = acc2 / w_sum - out.stat_mean * out.stat_mean.transpose();
    out.has_cov = true;
  }
  return out;
}

// Independent zero-mean normal priors, one sd for thresholds, one for
// interactions.
struct PriorSpec {
  double sd_threshold = 5.0;
  double sd_interaction = 2.5;

  void validate() const {
    if (!(sd_threshold > 0.0) || !(sd_interaction > 0.0)) {
      throw ValidationError("prior standard deviations must be positive");
    }
  }

  double sd_for(const ModelSpec& spec, int k) const {
    return spec.is_threshold(k) ? sd_threshold : sd_interaction;
  }
};

struct PriorEval {
  double log_density = 0.0;
  Vector gradient;        // d/dtheta log pi
  Vector curvature_diag;  // d^2/dtheta^2 log pi, constant and negative
};

inline PriorEval prior_eval(const ParamVector& theta, const ModelSpec& spec,
                            const PriorSpec& prior) {
  validate_theta(theta, spec);
  prior.validate();
  const int d = spec.dim();
  PriorEval out;
  out.gradient = Vector::Zero(d);
  out.curvature_diag = Vector::Zero(d);
  constexpr double half_log_2pi = 0.9189385332046727;
  for (int k = 0; k < d; ++k) {
    double sd = prior.sd_for(spec, k);
    double inv_var = 1.0 / (sd * sd);
    out.log_density += -half_log_2pi - std::log(sd) - 0.5 * theta[k] * theta[k] * inv_var;
    out.gradient[k] = -theta[k] * inv_var;
    out.curvature_diag[k] = -inv_var;
  }
  return out;
}

// Joint log likelihood s(X)'theta - n log Z(theta); adds log prior when given.
inline double full_log_likelihood(const Dataset& data, const ModelSpec& spec,
                                  const ParamVector& theta, const PriorSpec* prior = nullptr,
                                  std::uint64_t cap = kDefaultEnumerationCap) {
  SuffStats s = sufficient_statistics(data, spec, StatKind::full);
  double value = s.values.dot(theta) - data.n() * log_partition_exact(theta, spec, cap);
  if (prior) value += prior_eval(theta, spec, *prior).log_density;
  return value;
}

// Gradient of the joint log likelihood: s(X) - n E_theta[s].
inline Vector full_gradient(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                            const PriorSpec* prior = nullptr,
                            std::uint64_t cap = kDefaultEnumerationCap) {
  SuffStats s = sufficient_statistics(data, spec, StatKind::full);
  EnumeratedMoments mom = enumerate_moments(theta, spec, false, cap);
  Vector g = s.values - double(data.n()) * mom.stat_mean;
  if (prior) g += prior_eval(theta, spec, *prior).gradient;
  return g;
}

// Conditional distribution of variable i given the rest of its row:
// P(x_i = h | x_{-i}) over h = 0..m. rest_slope = sum_{j != i} theta_ij x_j.
inline void conditional_from_slope(double rest_slope, int i, const ParamVector& theta,
                                   const ModelSpec& spec, double* probs) {
  double max_l = 0.0;  // category 0 has logit 0
  for (int h = 1; h <= spec.m; ++h) {
    double l = theta[spec.threshold_index(i, h)] + h * rest_slope;
    probs[h] = l;
    if (l > max_l) max_l = l;
  }
  double sum = std::exp(-max_l);
  probs[0] = sum;
  for (int h = 1; h <= spec.m; ++h) {
    double e = std::exp(probs[h] - max_l);
    probs[h] = e;
    sum += e;
  }
  for (int h = 0; h <= spec.m; ++h) probs[h] /= sum;
}

inline Vector conditional_probabilities(const IntVector& row, int i, const ParamVector& theta,
                                        const ModelSpec& spec) {
  validate_theta(theta, spec);
  if (row.size() != spec.p) throw ValidationError("row length does not match p");
  if (i < 0 || i >= spec.p) throw ValidationError("variable index out of range");
  double slope = 0.0;
  for (int j = 0; j < spec.p; ++j) {
    if (j != i && row[j] > 0) slope += theta[spec.interaction_index(i, j)] * row[j];
  }
  Vector probs(spec.m + 1);
  conditional_from_slope(slope, i, theta, spec, probs.data());
  return probs;
}

namespace detail {

// n x p matrix of rest-slopes r(nu,i) = sum_{j != i} theta_ij x_{nu,j}.
inline Matrix rest_slopes(const Dataset& data, const ModelSpec& spec, const ParamVector& theta) {
  Matrix T = interaction_matrix(theta, spec);
  return data.values.cast<double>() * T;
}

}  // namespace detail

// Pseudo log likelihood: sum over rows and variables of the log full
// conditional. Equals s_tilde(X)'theta - sum of conditional normalizers.
// Adds log prior when given.
inline double pseudo_log_likelihood(const Dataset& data, const ModelSpec& spec,
                                    const ParamVector& theta, const PriorSpec* prior = nullptr) {
  validate(data, spec);
  validate_theta(theta, spec);
  Matrix R = detail::rest_slopes(data, spec, theta);
  double value = 0.0;
  for (int r = 0; r < data.n(); ++r) {
    for (int i = 0; i < spec.p; ++i) {
      int xi = data.values(r, i);
      double slope = R(r, i);
      // log numerator minus log normalizer, both on the logit scale
      double max_l = 0.0;
      double own = 0.0;
      for (int h = 1; h <= spec.m; ++h) {
        double l = theta[spec.threshold_index(i, h)] + h * slope;
        if (h == xi) own = l;
        if (l > max_l) max_l = l;
      }
      double sum = std::exp(-max_l);
      for (int h = 1; h <= spec.m; ++h) {
        sum += std::exp(theta[spec.threshold_index(i, h)] + h * slope - max_l);
      }
      value += own - (max_l + std::log(sum));
    }
  }
  if (prior) value += prior_eval(theta, spec, *prior).log_density;
  return value;
}

struct ValueGradient {
  double value = 0.0;
  Vector gradient;
};

// Pseudo log likelihood and its gradient in one pass over the data.
inline ValueGradient pseudo_value_and_gradient(const Dataset& data, const ModelSpec& spec,
                                               const ParamVector& theta,
                                               const PriorSpec* prior = nullptr) {
  validate(data, spec);
  validate_theta(theta, spec);
  const int d = spec.dim();
  Matrix R = detail::rest_slopes(data, spec, theta);
  ValueGradient out;
  out.gradient = Vector::Zero(d);
  std::vector<double> probs(spec.m + 1);
  Matrix cond_mean(data.n(), spec.p);  // E[x_i | rest] per row and variable
  for (int r = 0; r < data.n(); ++r) {
    for (int i = 0; i < spec.p; ++i) {
      int xi = data.values(r, i);
      double slope = R(r, i);
      conditional_from_slope(slope, i, theta, spec, probs.data());
      double mean = 0.0;
      for (int h = 1; h <= spec.m; ++h) mean += h * probs[h];
      cond_mean(r, i) = mean;
      out.value += std::log(std::max(probs[xi], 1e-300));
      for (int h = 1; h <= spec.m; ++h) {
        out.gradient[spec.threshold_index(i, h)] += (h == xi ? 1.0 : 0.0) - probs[h];
      }
    }
    for (int i = 0; i < spec.p; ++i) {
      int xi = data.values(r, i);
      for (int j = i + 1; j < spec.p; ++j) {
        int xj = data.values(r, j);
        out.gradient[spec.interaction_index(i, j)] +=
            2.0 * xi * xj - xj * cond_mean(r, i) - xi * cond_mean(r, j);
      }
    }
  }
  if (prior) {
    PriorEval pe = prior_eval(theta, spec, *prior);
    out.value += pe.log_density;
    out.gradient += pe.gradient;
  }
  return out;
}

inline Vector pseudo_gradient(const Dataset& data, const ModelSpec& spec, const ParamVector& theta,
                              const PriorSpec* prior = nullptr) {
  return pseudo_value_and_gradient(data, spec, theta, prior).gradient;
}

struct PseudoDerivatives {
  Vector gradient;  // of the pseudo log likelihood, prior excluded
  Matrix hessian;   // of the pseudo log likelihood, prior excluded
  Matrix scores;    // n x d matrix of per-observation score contributions
};

// Gradient, Hessian, and per-row scores of the pseudo log likelihood.
// Each full conditional is a multinomial logistic model, so its Hessian
// contribution is minus the conditional covariance of its feature vector.
inline PseudoDerivatives pseudo_score_and_curvature(const Dataset& data, const ModelSpec& spec,
                                                    const ParamVector& theta) {
  validate(data, spec);
  validate_theta(theta, spec);
  const int d = spec.dim();
  const int n = data.n();
  Matrix R = detail::rest_slopes(data, spec, theta);
  PseudoDerivatives out;
  out.gradient = Vector::Zero(d);
  out.hessian = Matrix::Zero(d, d);
  out.scores = Matrix::Zero(n, d);
  std::vector<double> probs(spec.m + 1);
  // per conditional c the parameters touched are mu(c,1..m) and theta(c,j)
  const int block = spec.m + spec.p - 1;
  std::vector<int> idx(block);
  Matrix local(block, block);
  Vector fbar(block);
  Matrix cond_mean(n, spec.p);
  Matrix cond_var(n, spec.p);

  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < spec.p; ++i) {
      conditional_from_slope(R(r, i), i, theta, spec, probs.data());
      double mean = 0.0, second = 0.0;
      for (int h = 1; h <= spec.m; ++h) {
        mean += h * probs[h];
        second += double(h) * h * probs[h];
      }
      cond_mean(r, i) = mean;
      cond_var(r, i) = second - mean * mean;
      int xi = data.values(r, i);
      for (int h = 1; h <= spec.m; ++h) {
        out.scores(r, spec.threshold_index(i, h)) += (h == xi ? 1.0 : 0.0) - probs[h];
      }
      // threshold x threshold block of conditional c = i
      for (int h = 1; h <= spec.m; ++h) {
        int kh = spec.threshold_index(i, h);
        for (int g = 1; g <= spec.m; ++g) {
          int kg = spec.threshold_index(i, g);
          double v = -(((h == g) ? probs[h] : 0.0) - probs[h] * probs[g]);
          out.hessian(kh, kg) += v;
        }
        // threshold x interaction cross terms
        for (int j = 0; j < spec.p; ++j) {
          if (j == i) continue;
          double xj = data.values(r, j);
          if (xj == 0.0) continue;
          int kj = spec.interaction_index(i, j);
          double v = -xj * probs[h] * (h - mean);
          out.hessian(kh, kj) += v;
          out.hessian(kj, kh) += v;
        }
      }
      // interaction x interaction terms sharing conditional c = i
      for (int j = 0; j < spec.p; ++j) {
        if (j == i) continue;
        double xj = data.values(r, j);
        if (xj == 0.0) continue;
        int kj = spec.interaction_index(i, j);
        for (int l = 0; l < spec.p; ++l) {
          if (l == i) continue;
          double xl = data.values(r, l);
          if (xl == 0.0) continue;
          out.hessian(kj, spec.interaction_index(i, l)) += -cond_var(r, i) * xj * xl;
        }
      }
    }
    for (int i = 0; i < spec.p; ++i) {
      double xi = data.values(r, i);
      for (int j = i + 1; j < spec.p; ++j) {
        double xj = data.values(r, j);
        out.scores(r, spec.interaction_index(i, j)) =
            2.0 * xi * xj - xj * cond_mean(r, i) - xi * cond_mean(r, j);
      }
    }
  }
  out.gradient = out.scores.colwise().sum().transpose();
  return out;
}

// Distinct rows of the dataset together with their multiplicities,
// in order of first appearance.
struct DistinctStates {
  IntMatrix states;            // K x p
  std::vector<int> counts;     // multiplicity per distinct row
  Matrix stats;                // K x d full-likelihood statistics
};

inline DistinctStates distinct_states(const Dataset& data, const ModelSpec& spec) {
  validate(data, spec);
  std::map<std::vector<int>, int> seen;  // row -> position in output
  std::vector<std::vector<int>> rows;
  std::vector<int> counts;
  std::vector<int> key(spec.p);
  for (int r = 0; r < data.n(); ++r) {
    for (int c = 0; c < spec.p; ++c) key[c] = data.values(r, c);
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(key, static_cast<int>(rows.size()));
      rows.push_back(key);
      counts.push_back(1);
    } else {
      ++counts[it->second];
    }
  }
  DistinctStates out;
  const int K = static_cast<int>(rows.size());
  out.states.resize(K, spec.p);
  out.stats.resize(K, spec.dim());
  out.counts = std::move(counts);
  IntVector x(spec.p);
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < spec.p; ++c) {
      out.states(k, c) = rows[k][c];
      x[c] = rows[k][c];
    }
    out.stats.row(k) = state_statistics(x, spec).transpose();
  }
  return out;
}

// Empirical log likelihood: the partition sum is restricted to the distinct
// observed states. When every state appears in the data this equals the
// joint log likelihood.
inline double empirical_log_likelihood(const Dataset& data, const ModelSpec& spec,
                                       const ParamVector& theta,
                                       const PriorSpec* prior = nullptr) {
  validate_theta(theta, spec);
  DistinctStates ds = distinct_states(data, spec);
  SuffStats s = sufficient_statistics(data, spec, StatKind::full);
  Vector energies = ds.stats * theta;
  double max_e = energies.maxCoeff();
  double sum = (energies.array() - max_e).exp().sum();
  double value = s.values.dot(theta) - data.n() * (max_e + std::log(sum));
  if (prior) value += prior_eval(theta, spec, *prior).log_density;
  return value;
}

}  // namespace omrf
