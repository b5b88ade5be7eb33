#pragma once

#include <string>

#include "omrf/estimate.hpp"
#include "omrf/rescale.hpp"
#include "omrf/samplers.hpp"

namespace omrf {

struct MethodOptions {
  int mc_outer = 100000;   // Monte Carlo budget for RM / MCH work outside the chain
  int rm_iterations = 200;
  int mch_sweeps = 100;
};

namespace detail {

inline Vector retained_means(const Chain& chain) {
  return chain.retained().colwise().mean().transpose();
}

inline EstimateResult rm_optimum(const Dataset& data, const ModelSpec& spec,
                                 const PriorSpec& prior, const SamplerConfig& cfg,
                                 const MethodOptions& opts) {
  Vector start = map_pseudo(data, spec, prior).theta_star;
  RobbinsMonroOptions rm;
  rm.iterations = opts.rm_iterations;
  rm.mc_samples = std::max(100, opts.mc_outer / std::max(1, opts.rm_iterations));
  rm.seed = derive_seed(cfg.seed, 101);
  return robbins_monro(data, spec, prior, start, rm);
}

// Shared tail of the ph-* methods: pseudo chain, factors at the chosen
// center, affine push of every draw.
inline Chain calibrated_chain(Chain pseudo_chain, const Dataset& data, const ModelSpec& spec,
                              const PriorSpec& prior, const Vector& center,
                              RescalingVariant variant, const std::string& method,
                              const MethodOptions& opts, std::uint64_t seed) {
  WallTimer timer;
  BuildRescalingOptions build;
  build.mc_samples = opts.mc_outer;
  build.sweeps = opts.mch_sweeps;
  build.seed = derive_seed(seed, 202);
  RescalingMatrix factors = build_rescaling(data, spec, center, prior, variant, build);
  pseudo_chain.draws = post_hoc_calibrate(pseudo_chain.draws, center, factors.L, factors.Gamma);
  pseudo_chain.method = method;
  pseudo_chain.rescaling = factors;
  pseudo_chain.wall_time_seconds += timer.seconds();
  return pseudo_chain;
}

}  // namespace detail

// Dispatches a method name from the config surface to a full sampling run,
// including any estimation and rescaling stages the method needs.
inline Chain run_method(const std::string& method, const Dataset& data, const ModelSpec& spec,
                        const PriorSpec& prior, const SamplerConfig& cfg,
                        const MethodOptions& opts = {}) {
  if (method == "exact") return sample_exact(data, spec, prior, cfg);
  if (method == "pseudo") return sample_pseudo(data, spec, prior, cfg);
  if (method == "empirical") return sample_empirical(data, spec, prior, cfg);
  if (method == "adacore") return sample_adacore(data, spec, prior, cfg);
  if (method == "dmh") return sample_dmh(data, spec, prior, cfg);
  if (method == "adadmh") return sample_adadmh(data, spec, prior, cfg);

  if (method == "core") {
    detail::WallTimer timer;
    Vector theta_star = map_pseudo(data, spec, prior).theta_star;
    RescalingMatrix rescaling =
        build_rescaling(data, spec, theta_star, prior, RescalingVariant::GHW);
    Chain chain = sample_core(data, spec, prior, rescaling, cfg, "core");
    chain.wall_time_seconds = timer.seconds();
    return chain;
  }
  if (method == "core-rm" || method == "core-mch") {
    detail::WallTimer timer;
    BuildRescalingOptions build;
    build.mc_samples = opts.mc_outer;
    build.sweeps = opts.mch_sweeps;
    build.seed = derive_seed(cfg.seed, 202);
    Vector center;
    RescalingVariant variant;
    if (method == "core-rm") {
      EstimateResult rm = detail::rm_optimum(data, spec, prior, cfg, opts);
      center = rm.theta_star;
      variant = RescalingVariant::RM;
    } else {
      center = map_pseudo(data, spec, prior).theta_star;
      variant = RescalingVariant::MCH;
    }
    RescalingMatrix rescaling = build_rescaling(data, spec, center, prior, variant, build);
    SamplerConfig core_cfg = cfg;
    core_cfg.init = center;
    Chain chain = sample_core(data, spec, prior, rescaling, core_cfg, method);
    chain.wall_time_seconds = timer.seconds();
    return chain;
  }
  if (method == "ph-ghw" || method == "ph-mch" || method == "ph-rm") {
    Chain pseudo_chain = sample_pseudo(data, spec, prior, cfg);
    Vector center;
    RescalingVariant variant;
    if (method == "ph-rm") {
      EstimateResult rm = detail::rm_optimum(data, spec, prior, cfg, opts);
      center = rm.theta_star;
      variant = RescalingVariant::RM;
    } else {
      center = detail::retained_means(pseudo_chain);
      variant = method == "ph-ghw" ? RescalingVariant::GHW : RescalingVariant::MCH;
    }
    return detail::calibrated_chain(std::move(pseudo_chain), data, spec, prior, center, variant,
                                    method, opts, cfg.seed);
  }
  throw ValidationError("unknown method '" + method + "'");
}

}  // namespace omrf
