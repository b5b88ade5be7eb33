#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "omrf/model.hpp"

namespace omrf {

// Extra sweeps prepended when a chain starts from a uniform-random state
// instead of an observed configuration.
constexpr int kRandomInitBurnInSweeps = 1000;

namespace detail {

inline int sample_category(const double* probs, int m, double u) {
  double acc = 0.0;
  for (int h = 0; h < m; ++h) {
    acc += probs[h];
    if (u < acc) return h;
  }
  return m;
}

// One full single-site Gibbs sweep over a row, in place.
inline void gibbs_sweep_row(IntVector& x, const ParamVector& theta, const ModelSpec& spec,
                            std::mt19937_64& rng, double* probs) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < spec.p; ++i) {
    double slope = 0.0;
    for (int j = 0; j < spec.p; ++j) {
      if (j != i && x[j] > 0) slope += theta[spec.interaction_index(i, j)] * x[j];
    }
    conditional_from_slope(slope, i, theta, spec, probs);
    x[i] = sample_category(probs, spec.m, unif(rng));
  }
}

}  // namespace detail

// Draws n rows from the model by independent single-site Gibbs chains,
// one chain per row, each seeded from (seed, row). Initial states are the
// rows of init, recycled when n exceeds init.n().
inline Dataset gibbs_synthesize(const ParamVector& theta, const ModelSpec& spec, int n, int sweeps,
                                const Dataset& init, std::uint64_t seed) {
  validate_theta(theta, spec);
  validate(init, spec);
  if (n < 1) throw ValidationError("gibbs_synthesize: n must be >= 1");
  if (sweeps < 1) throw ValidationError("gibbs_synthesize: sweeps must be >= 1");
  Dataset out;
  out.values.resize(n, spec.p);
  IntVector x(spec.p);
  std::vector<double> probs(spec.m + 1);
  for (int r = 0; r < n; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    x = init.values.row(r % init.n()).transpose();
    for (int s = 0; s < sweeps; ++s) detail::gibbs_sweep_row(x, theta, spec, rng, probs.data());
    out.values.row(r) = x.transpose();
  }
  return out;
}

// Same, starting every chain from a uniform-random state; a fixed burn-in of
// kRandomInitBurnInSweeps sweeps is added before the requested sweeps.
inline Dataset gibbs_synthesize_random_init(const ParamVector& theta, const ModelSpec& spec, int n,
                                            int sweeps, std::uint64_t seed) {
  validate_theta(theta, spec);
  if (n < 1) throw ValidationError("gibbs_synthesize: n must be >= 1");
  if (sweeps < 1) throw ValidationError("gibbs_synthesize: sweeps must be >= 1");
  Dataset out;
  out.values.resize(n, spec.p);
  IntVector x(spec.p);
  std::vector<double> probs(spec.m + 1);
  for (int r = 0; r < n; ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::uniform_int_distribution<int> cat(0, spec.m);
    for (int i = 0; i < spec.p; ++i) x[i] = cat(rng);
    int total = kRandomInitBurnInSweeps + sweeps;
    for (int s = 0; s < total; ++s) detail::gibbs_sweep_row(x, theta, spec, rng, probs.data());
    out.values.row(r) = x.transpose();
  }
  return out;
}

}  // namespace omrf
