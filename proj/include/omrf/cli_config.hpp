#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "omrf/metrics.hpp"
#include "omrf/model.hpp"
#include "omrf/samplers.hpp"
#include "omrf/simulate.hpp"

namespace omrf {

namespace cfgdetail {

inline void check_keys(const nlohmann::json& obj, const std::string& section,
                       std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) {
    throw ConfigError("config section '" + section + "' must be a JSON object");
  }
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in config section '" + section + "'");
    }
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback, const std::string& section) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
  }
}

}  // namespace cfgdetail

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {
      "exact",   "pseudo", "empirical", "core",  "core-rm", "core-mch",
      "adacore", "dmh",    "adadmh",    "ph-rm", "ph-ghw",  "ph-mch"};
  return methods;
}

struct McSamples {
  int inner = 25000;   // DMH/AdaDMH inner Gibbs budget per regeneration
  int outer = 100000;  // Monte Carlo budget outside the sampling stage (RM, MCH)
};

struct IoPaths {
  std::string dataset;
  std::string structure;
  std::string out_dir = ".";
  std::string chain;        // calibrate input
  std::string exact_chain;  // metrics reference
  std::vector<std::string> method_chains;
};

struct EstimateConfig {
  std::string estimator = "map";  // map | mple | rm
  int rm_iterations = 200;
};

struct SimulateConfig {
  std::string source;
  int n = 500;
  int p = 4;
  int m = 0;  // 0 infers the category count from the source data
  std::string structure = "random";
  double density = 0.3;
  double rewire_prob = 0.1;
  int ring_degree = 2;
  int k_structures = 10;
  int k_samples = 10;
  int gibbs_sweeps = 100;
};

struct BenchmarkGridConfig {
  std::string source;
  std::vector<std::string> structures = {"full", "random", "smallworld"};
  std::vector<int> p_list = {4, 6};
  std::vector<int> n_list = {500, 1000};
  int replicates = 20;
  std::vector<std::string> methods = {"pseudo", "core", "adacore", "ph-ghw"};
  int gibbs_sweeps = 100;
  int iterations = 12000;  // per-chain sampler overrides for the grid
  int burn_in = 4000;
};

struct RunConfig {
  ModelSpec model{4, 1};
  PriorSpec prior;
  SamplerConfig sampler;
  std::string method = "pseudo";
  std::uint64_t seed = 1;
  McSamples mc_samples;
  IoPaths io;
  EstimateConfig estimate;
  SimulateConfig simulate;
  BenchmarkGridConfig benchmark;
  Condition condition;

  static RunConfig parse(const nlohmann::json& j);
  nlohmann::json echo() const;
};

inline RunConfig RunConfig::parse(const nlohmann::json& j) {
  using cfgdetail::check_keys;
  using cfgdetail::get_or;
  RunConfig cfg;
  check_keys(j, "(root)",
             {"model", "prior", "sampler", "method", "seed", "mc_samples", "io", "estimate",
              "simulate", "benchmark", "condition"});

  if (j.contains("model")) {
    const auto& o = j.at("model");
    check_keys(o, "model", {"p", "m"});
    cfg.model.p = get_or(o, "p", cfg.model.p, "model");
    cfg.model.m = get_or(o, "m", cfg.model.m, "model");
  }
  if (j.contains("prior")) {
    const auto& o = j.at("prior");
    check_keys(o, "prior", {"sd_threshold", "sd_interaction"});
    cfg.prior.sd_threshold = get_or(o, "sd_threshold", cfg.prior.sd_threshold, "prior");
    cfg.prior.sd_interaction = get_or(o, "sd_interaction", cfg.prior.sd_interaction, "prior");
  }
  if (j.contains("mc_samples")) {
    const auto& o = j.at("mc_samples");
    check_keys(o, "mc_samples", {"inner", "outer"});
    cfg.mc_samples.inner = get_or(o, "inner", cfg.mc_samples.inner, "mc_samples");
    cfg.mc_samples.outer = get_or(o, "outer", cfg.mc_samples.outer, "mc_samples");
  }
  cfg.sampler.inner_gibbs_iters = cfg.mc_samples.inner;
  if (j.contains("sampler")) {
    const auto& o = j.at("sampler");
    check_keys(o, "sampler",
               {"iterations", "burn_in", "target_accept", "sigma2_init", "fisher_refresh",
                "inner_gibbs_iters", "adacore"});
    cfg.sampler.iterations = get_or(o, "iterations", cfg.sampler.iterations, "sampler");
    cfg.sampler.burn_in = get_or(o, "burn_in", cfg.sampler.burn_in, "sampler");
    cfg.sampler.target_accept = get_or(o, "target_accept", cfg.sampler.target_accept, "sampler");
    cfg.sampler.sigma2_init = get_or(o, "sigma2_init", cfg.sampler.sigma2_init, "sampler");
    cfg.sampler.fisher_refresh =
        get_or(o, "fisher_refresh", cfg.sampler.fisher_refresh, "sampler");
    cfg.sampler.inner_gibbs_iters =
        get_or(o, "inner_gibbs_iters", cfg.sampler.inner_gibbs_iters, "sampler");
    if (o.contains("adacore")) {
      const auto& a = o.at("adacore");
      check_keys(a, "sampler.adacore", {"xi", "tau", "epsilon"});
      cfg.sampler.adacore.xi = get_or(a, "xi", cfg.sampler.adacore.xi, "sampler.adacore");
      cfg.sampler.adacore.tau = get_or(a, "tau", cfg.sampler.adacore.tau, "sampler.adacore");
      cfg.sampler.adacore.epsilon =
          get_or(a, "epsilon", cfg.sampler.adacore.epsilon, "sampler.adacore");
    }
  }
  cfg.method = get_or(j, "method", cfg.method, "(root)");
  if (std::find(known_methods().begin(), known_methods().end(), cfg.method) ==
      known_methods().end()) {
    throw ConfigError("unknown method '" + cfg.method + "'");
  }
  cfg.seed = get_or(j, "seed", cfg.seed, "(root)");
  cfg.sampler.seed = cfg.seed;
  if (j.contains("io")) {
    const auto& o = j.at("io");
    check_keys(o, "io",
               {"dataset", "structure", "out_dir", "chain", "exact_chain", "method_chains"});
    cfg.io.dataset = get_or(o, "dataset", cfg.io.dataset, "io");
    cfg.io.structure = get_or(o, "structure", cfg.io.structure, "io");
    cfg.io.out_dir = get_or(o, "out_dir", cfg.io.out_dir, "io");
    cfg.io.chain = get_or(o, "chain", cfg.io.chain, "io");
    cfg.io.exact_chain = get_or(o, "exact_chain", cfg.io.exact_chain, "io");
    cfg.io.method_chains = get_or(o, "method_chains", cfg.io.method_chains, "io");
  }
  if (j.contains("estimate")) {
    const auto& o = j.at("estimate");
    check_keys(o, "estimate", {"estimator", "rm_iterations"});
    cfg.estimate.estimator = get_or(o, "estimator", cfg.estimate.estimator, "estimate");
    cfg.estimate.rm_iterations =
        get_or(o, "rm_iterations", cfg.estimate.rm_iterations, "estimate");
    if (cfg.estimate.estimator != "map" && cfg.estimate.estimator != "mple" &&
        cfg.estimate.estimator != "rm") {
      throw ConfigError("estimate.estimator must be one of map, mple, rm");
    }
  }
  if (j.contains("simulate")) {
    const auto& o = j.at("simulate");
    check_keys(o, "simulate",
               {"source", "n", "p", "m", "structure", "density", "rewire_prob", "ring_degree",
                "k_structures", "k_samples", "gibbs_sweeps"});
    cfg.simulate.source = get_or(o, "source", cfg.simulate.source, "simulate");
    cfg.simulate.n = get_or(o, "n", cfg.simulate.n, "simulate");
    cfg.simulate.p = get_or(o, "p", cfg.simulate.p, "simulate");
    cfg.simulate.m = get_or(o, "m", cfg.simulate.m, "simulate");
    cfg.simulate.structure = get_or(o, "structure", cfg.simulate.structure, "simulate");
    cfg.simulate.density = get_or(o, "density", cfg.simulate.density, "simulate");
    cfg.simulate.rewire_prob = get_or(o, "rewire_prob", cfg.simulate.rewire_prob, "simulate");
    cfg.simulate.ring_degree = get_or(o, "ring_degree", cfg.simulate.ring_degree, "simulate");
    cfg.simulate.k_structures = get_or(o, "k_structures", cfg.simulate.k_structures, "simulate");
    cfg.simulate.k_samples = get_or(o, "k_samples", cfg.simulate.k_samples, "simulate");
    cfg.simulate.gibbs_sweeps = get_or(o, "gibbs_sweeps", cfg.simulate.gibbs_sweeps, "simulate");
  }
  if (j.contains("benchmark")) {
    const auto& o = j.at("benchmark");
    check_keys(o, "benchmark",
               {"source", "structures", "p", "n", "replicates", "methods", "gibbs_sweeps",
                "iterations", "burn_in"});
    cfg.benchmark.source = get_or(o, "source", cfg.benchmark.source, "benchmark");
    cfg.benchmark.structures = get_or(o, "structures", cfg.benchmark.structures, "benchmark");
    cfg.benchmark.p_list = get_or(o, "p", cfg.benchmark.p_list, "benchmark");
    cfg.benchmark.n_list = get_or(o, "n", cfg.benchmark.n_list, "benchmark");
    cfg.benchmark.replicates = get_or(o, "replicates", cfg.benchmark.replicates, "benchmark");
    cfg.benchmark.methods = get_or(o, "methods", cfg.benchmark.methods, "benchmark");
    cfg.benchmark.gibbs_sweeps =
        get_or(o, "gibbs_sweeps", cfg.benchmark.gibbs_sweeps, "benchmark");
    cfg.benchmark.iterations = get_or(o, "iterations", cfg.benchmark.iterations, "benchmark");
    cfg.benchmark.burn_in = get_or(o, "burn_in", cfg.benchmark.burn_in, "benchmark");
    for (const std::string& m : cfg.benchmark.methods) {
      if (std::find(known_methods().begin(), known_methods().end(), m) ==
          known_methods().end()) {
        throw ConfigError("unknown method '" + m + "' in benchmark.methods");
      }
    }
    for (const std::string& s : cfg.benchmark.structures) structure_type_from_string(s);
  }
  if (j.contains("condition")) {
    const auto& o = j.at("condition");
    check_keys(o, "condition", {"n", "p", "structure", "label"});
    cfg.condition.N = get_or(o, "n", cfg.condition.N, "condition");
    cfg.condition.P = get_or(o, "p", cfg.condition.P, "condition");
    cfg.condition.structure = get_or(o, "structure", cfg.condition.structure, "condition");
    cfg.condition.label = get_or(o, "label", cfg.condition.label, "condition");
  }
  return cfg;
}

// Fully materialized config: parsing the echo reproduces this config exactly.
inline nlohmann::json RunConfig::echo() const {
  return nlohmann::json{
      {"model", {{"p", model.p}, {"m", model.m}}},
      {"prior",
       {{"sd_threshold", prior.sd_threshold}, {"sd_interaction", prior.sd_interaction}}},
      {"sampler",
       {{"iterations", sampler.iterations},
        {"burn_in", sampler.burn_in},
        {"target_accept", sampler.target_accept},
        {"sigma2_init", sampler.sigma2_init},
        {"fisher_refresh", sampler.fisher_refresh},
        {"inner_gibbs_iters", sampler.inner_gibbs_iters},
        {"adacore",
         {{"xi", sampler.adacore.xi},
          {"tau", sampler.adacore.tau},
          {"epsilon", sampler.adacore.epsilon}}}}},
      {"method", method},
      {"seed", seed},
      {"mc_samples", {{"inner", mc_samples.inner}, {"outer", mc_samples.outer}}},
      {"io",
       {{"dataset", io.dataset},
        {"structure", io.structure},
        {"out_dir", io.out_dir},
        {"chain", io.chain},
        {"exact_chain", io.exact_chain},
        {"method_chains", io.method_chains}}},
      {"estimate",
       {{"estimator", estimate.estimator}, {"rm_iterations", estimate.rm_iterations}}},
      {"simulate",
       {{"source", simulate.source},
        {"n", simulate.n},
        {"p", simulate.p},
        {"m", simulate.m},
        {"structure", simulate.structure},
        {"density", simulate.density},
        {"rewire_prob", simulate.rewire_prob},
        {"ring_degree", simulate.ring_degree},
        {"k_structures", simulate.k_structures},
        {"k_samples", simulate.k_samples},
        {"gibbs_sweeps", simulate.gibbs_sweeps}}},
      {"benchmark",
       {{"source", benchmark.source},
        {"structures", benchmark.structures},
        {"p", benchmark.p_list},
        {"n", benchmark.n_list},
        {"replicates", benchmark.replicates},
        {"methods", benchmark.methods},
        {"gibbs_sweeps", benchmark.gibbs_sweeps},
        {"iterations", benchmark.iterations},
        {"burn_in", benchmark.burn_in}}},
      {"condition",
       {{"n", condition.N},
        {"p", condition.P},
        {"structure", condition.structure},
        {"label", condition.label}}}};
}

}  // namespace omrf
