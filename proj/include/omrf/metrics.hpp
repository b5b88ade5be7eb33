#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "omrf/model.hpp"
#include "omrf/samplers.hpp"

namespace omrf {

inline double sample_sd(const Vector& x) {
  double mean = x.mean();
  return std::sqrt((x.array() - mean).square().sum() / double(x.size() - 1));
}

// Linear-interpolation quantile of a sorted vector (R type 7).
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  double pos = q * double(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  double w = pos - double(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[lo + 1];
}

// Silverman rule 0.9 min(sd, IQR/1.34) S^(-1/5). Falls back to the sd when
// the IQR collapses under heavy ties; errors on zero-variance input.
inline double silverman_bandwidth(const Vector& draws) {
  if (draws.size() < 2) throw ValidationError("bandwidth: need at least 2 draws");
  double sd = sample_sd(draws);
  if (!(sd > 0.0)) throw ValidationError("bandwidth: sample is degenerate (zero variance)");
  std::vector<double> sorted(draws.data(), draws.data() + draws.size());
  std::sort(sorted.begin(), sorted.end());
  double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(double(draws.size()), -0.2);
}

struct DensityEstimate {
  Vector grid;
  Vector heights;
  double bandwidth = 0.0;
};

namespace detail {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

// Gaussian KDE evaluated on an equispaced grid via linear binning followed
// by kernel convolution; matches the direct sum to kernel-truncation error.
inline Vector kde_heights_on_grid(const Vector& draws, const Vector& grid, double bw) {
  const int G = static_cast<int>(grid.size());
  const double lo = grid[0];
  const double step = grid[1] - grid[0];
  Vector bins = Vector::Zero(G);
  for (int i = 0; i < draws.size(); ++i) {
    double t = (draws[i] - lo) / step;
    t = std::clamp(t, 0.0, double(G - 1));
    int k = std::min(G - 2, int(t));
    double w = t - k;
    bins[k] += 1.0 - w;
    bins[k + 1] += w;
  }
  const int reach = std::min(G - 1, int(std::ceil(8.0 * bw / step)));
  std::vector<double> kernel(reach + 1);
  for (int j = 0; j <= reach; ++j) {
    double u = j * step / bw;
    kernel[j] = std::exp(-0.5 * u * u);
  }
  const double norm = kInvSqrt2Pi / (double(draws.size()) * bw);
  Vector heights = Vector::Zero(G);
  for (int g = 0; g < G; ++g) {
    double acc = bins[g] * kernel[0];
    for (int j = 1; j <= reach; ++j) {
      if (g - j >= 0) acc += bins[g - j] * kernel[j];
      if (g + j < G) acc += bins[g + j] * kernel[j];
    }
    heights[g] = acc * norm;
  }
  return heights;
}

inline double trapezoid(const Vector& grid, const Vector& heights) {
  double acc = 0.0;
  for (int g = 1; g < grid.size(); ++g) {
    acc += 0.5 * (heights[g] + heights[g - 1]) * (grid[g] - grid[g - 1]);
  }
  return acc;
}

}  // namespace detail

constexpr int kDensityGridSize = 512;

inline DensityEstimate kde_density(const Vector& draws, int grid_size = kDensityGridSize) {
  if (grid_size < 16) throw ValidationError("kde: grid_size must be >= 16");
  DensityEstimate out;
  out.bandwidth = silverman_bandwidth(draws);
  double lo = draws.minCoeff() - 3.0 * out.bandwidth;
  double hi = draws.maxCoeff() + 3.0 * out.bandwidth;
  out.grid = Vector::LinSpaced(grid_size, lo, hi);
  out.heights = detail::kde_heights_on_grid(draws, out.grid, out.bandwidth);
  return out;
}

// Overlap index: integral of the pointwise minimum of the two KDEs on a
// shared grid, clamped to [0, 1]. 1 means the marginals coincide.
inline double overlap_index(const Vector& a, const Vector& b,
                            int grid_size = kDensityGridSize) {
  double bw_a = silverman_bandwidth(a);
  double bw_b = silverman_bandwidth(b);
  double pad = 3.0 * std::max(bw_a, bw_b);
  double lo = std::min(a.minCoeff(), b.minCoeff()) - pad;
  double hi = std::max(a.maxCoeff(), b.maxCoeff()) + pad;
  Vector grid = Vector::LinSpaced(grid_size, lo, hi);
  Vector fa = detail::kde_heights_on_grid(a, grid, bw_a);
  Vector fb = detail::kde_heights_on_grid(b, grid, bw_b);
  Vector fmin = fa.cwiseMin(fb);
  return std::clamp(detail::trapezoid(grid, fmin), 0.0, 1.0);
}

struct SavageDickey {
  double log_bf = 0.0;   // log of posterior density over prior density at 0
  bool floored = false;  // numerator hit the density floor
};

constexpr double kSavageDickeyDensityFloor = 1e-12;

// Savage-Dickey ratio for the point null at zero: KDE of the posterior
// draws evaluated exactly at 0 against the N(0, prior_sd^2) ordinate.
inline SavageDickey savage_dickey(const Vector& draws, double prior_sd) {
  if (!(prior_sd > 0.0)) throw ValidationError("savage_dickey: prior_sd must be positive");
  double bw = silverman_bandwidth(draws);
  double acc = 0.0;
  for (int i = 0; i < draws.size(); ++i) {
    double u = draws[i] / bw;
    acc += std::exp(-0.5 * u * u);
  }
  double density = acc * detail::kInvSqrt2Pi / (double(draws.size()) * bw);
  SavageDickey out;
  if (density < kSavageDickeyDensityFloor) {
    density = kSavageDickeyDensityFloor;
    out.floored = true;
  }
  double prior_density = detail::kInvSqrt2Pi / prior_sd;
  out.log_bf = std::log(density) - std::log(prior_density);
  return out;
}

// Effective sample size by the initial positive sequence estimator: sum
// paired autocorrelations until the first non-positive pair.
inline double ess(const Vector& x) {
  const int n = static_cast<int>(x.size());
  if (n < 100) throw ValidationError("ess: need at least 100 draws, got " + std::to_string(n));
  Vector centered = x.array() - x.mean();
  double c0 = centered.squaredNorm() / double(n);
  if (!(c0 > 0.0)) throw ValidationError("ess: column is constant");
  auto rho = [&](int k) {
    double acc = 0.0;
    for (int i = 0; i + k < n; ++i) acc += centered[i] * centered[i + k];
    return acc / (double(n) * c0);
  };
  double tau = -1.0;
  for (int t = 0; 2 * t + 1 < n; ++t) {
    double pair = rho(2 * t) + rho(2 * t + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  if (tau <= 0.0) return double(n);
  return std::min(double(n), double(n) / tau);
}

// Pearson correlations between retained draw columns for the given index
// pairs. Degenerate columns yield NaN and a note instead of an error.
struct CorrelationReport {
  std::vector<double> values;
  std::vector<std::string> notes;
};

inline CorrelationReport posterior_correlations(const Chain& chain,
                                                const std::vector<std::pair<int, int>>& pairs) {
  Matrix retained = chain.retained();
  CorrelationReport out;
  out.values.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= retained.cols() || j >= retained.cols()) {
      throw ValidationError("posterior_correlations: index pair out of range");
    }
    Vector a = retained.col(i).array() - retained.col(i).mean();
    Vector b = retained.col(j).array() - retained.col(j).mean();
    double denom = a.norm() * b.norm();
    if (!(denom > 0.0)) {
      out.values.push_back(std::numeric_limits<double>::quiet_NaN());
      out.notes.push_back("correlation (" + std::to_string(i) + "," + std::to_string(j) +
                          ") undefined: degenerate column");
      continue;
    }
    out.values.push_back(a.dot(b) / denom);
  }
  return out;
}

struct Condition {
  int N = 0;
  int P = 0;
  std::string structure;
  std::string label;
};

struct ParamMetrics {
  std::string name;
  double overlap = 0.0;
  double log_bf = 0.0;
  bool bf_floored = false;
  double sd_ratio = 0.0;
  double ess = 0.0;
};

struct MethodReport {
  std::string method;
  double wall_time_seconds = 0.0;
  double acceptance_rate = 0.0;
  std::vector<ParamMetrics> params;
};

struct MetricsReport {
  Condition condition;
  std::vector<MethodReport> methods;
  std::vector<std::string> notes;
};

// Per-parameter metrics of every chain against the exact reference chain.
// The exact chain itself appears as the first method entry, so its ESS and
// Bayes factors are available to downstream comparisons.
inline MetricsReport build_report(const Chain& exact_chain, const std::vector<Chain>& methods,
                                  const ModelSpec& spec, const PriorSpec& prior,
                                  const Condition& condition) {
  MetricsReport report;
  report.condition = condition;
  std::vector<std::string> names = spec.parameter_names();
  const int d = spec.dim();
  if (exact_chain.reported().cols() != d) {
    throw ValidationError("build_report: exact chain dimension does not match the model");
  }
  auto method_entry = [&](const Chain& chain) {
    if (chain.reported().cols() != d) {
      throw ValidationError("build_report: chain '" + chain.method +
                            "' dimension does not match the model");
    }
    MethodReport mr;
    mr.method = chain.method;
    mr.wall_time_seconds = chain.wall_time_seconds;
    mr.acceptance_rate = chain.acceptance_rate;
    mr.params.resize(d);
    for (int k = 0; k < d; ++k) {
      Vector col = chain.retained_column(k);
      Vector ref = exact_chain.retained_column(k);
      ParamMetrics& pm = mr.params[k];
      pm.name = names[k];
      pm.overlap = overlap_index(col, ref);
      SavageDickey sd_bf = savage_dickey(col, prior.sd_for(spec, k));
      pm.log_bf = sd_bf.log_bf;
      pm.bf_floored = sd_bf.floored;
      pm.sd_ratio = sample_sd(col) / sample_sd(ref);
      pm.ess = ess(col);
    }
    return mr;
  };
  report.methods.push_back(method_entry(exact_chain));
  for (const Chain& chain : methods) report.methods.push_back(method_entry(chain));
  report.notes.push_back(
      "savage-dickey ratios treat the remaining parameters as fixed nuisance "
      "directions; compare them across methods, not across models");
  return report;
}

}  // namespace omrf
