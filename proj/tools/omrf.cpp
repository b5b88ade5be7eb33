// Command-line front end: simulate | fit | sample | calibrate | metrics |
// benchmark. Every run prints the fully-defaulted config as JSON on stdout,
// so a run can be reproduced from its log alone.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "omrf/benchmark.hpp"
#include "omrf/cli_config.hpp"
#include "omrf/io.hpp"
#include "omrf/methods.hpp"
#include "omrf/simulate.hpp"

namespace fs = std::filesystem;
using omrf::json;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;  // -1 means keep the config value
  int threads = 1;
  bool resume = false;
};

omrf::RunConfig load_config(const GlobalArgs& args) {
  json doc;
  try {
    doc = json::parse(omrf::read_text(args.config_path));
  } catch (const json::exception& e) {
    throw omrf::ConfigError(args.config_path + ": " + e.what());
  }
  omrf::RunConfig cfg = omrf::RunConfig::parse(doc);
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.sampler.seed = cfg.seed;
  }
  if (!args.out_dir.empty()) cfg.io.out_dir = args.out_dir;
  if (const char* cap = std::getenv("MRF_ENUM_CAP")) {
    try {
      cfg.sampler.enum_cap = std::stoull(cap);
    } catch (const std::exception&) {
      throw omrf::ConfigError(std::string("MRF_ENUM_CAP ('") + cap +
                              "') is not an unsigned integer");
    }
  }
  std::cout << cfg.echo().dump(2) << "\n";
  return cfg;
}

omrf::Dataset load_dataset(const omrf::RunConfig& cfg) {
  if (cfg.io.dataset.empty()) throw omrf::ConfigError("io.dataset is required");
  omrf::Dataset data = omrf::read_dataset_csv(cfg.io.dataset);
  omrf::validate(data, cfg.model);
  return data;
}

fs::path sidecar_of(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

omrf::SimulationPlan plan_from(const omrf::RunConfig& cfg) {
  if (cfg.simulate.source.empty()) throw omrf::ConfigError("simulate.source is required");
  omrf::SimulationPlan plan;
  plan.source = omrf::read_dataset_csv(cfg.simulate.source);
  plan.N = cfg.simulate.n;
  plan.P = cfg.simulate.p;
  plan.m = cfg.simulate.m;
  plan.structure = omrf::structure_type_from_string(cfg.simulate.structure);
  plan.structure_params.density = cfg.simulate.density;
  plan.structure_params.rewire_prob = cfg.simulate.rewire_prob;
  plan.structure_params.ring_degree = cfg.simulate.ring_degree;
  plan.k_structures = cfg.simulate.k_structures;
  plan.k_samples = cfg.simulate.k_samples;
  plan.gibbs_sweeps = cfg.simulate.gibbs_sweeps;
  plan.seed = cfg.seed;
  return plan;
}

int cmd_simulate(const omrf::RunConfig& cfg) {
  fs::path out_dir = cfg.io.out_dir;
  std::vector<omrf::SimulatedDataset> sims = omrf::run_simulation_plan(plan_from(cfg));
  int written = 0;
  for (const omrf::SimulatedDataset& sim : sims) {
    std::string tag = "s" + std::to_string(sim.structure_index);
    if (sim.sample_index == 0) {
      json edges = json::array();
      for (auto [i, j] : sim.structure.edges) edges.push_back(json::array({i, j}));
      json truth{{"structure_index", sim.structure_index},
                 {"p", sim.spec.p},
                 {"m", sim.spec.m},
                 {"edges", std::move(edges)},
                 {"true_theta", omrf::vector_to_json(sim.true_theta)},
                 {"mple_converged", sim.mple_converged},
                 {"warnings", sim.warnings}};
      omrf::atomic_write_text(out_dir / ("truth_" + tag + ".json"), truth.dump(2) + "\n");
      ++written;
    }
    omrf::write_dataset_csv(
        sim.data, out_dir / ("dataset_" + tag + "_r" + std::to_string(sim.sample_index) + ".csv"));
    ++written;
  }
  std::cerr << "simulate: wrote " << written << " files under " << out_dir.string() << "\n";
  return 0;
}

int cmd_fit(const omrf::RunConfig& cfg) {
  omrf::Dataset data = load_dataset(cfg);
  omrf::GraphStructure structure;
  bool has_structure = !cfg.io.structure.empty();
  if (has_structure) structure = omrf::read_structure_csv(cfg.io.structure, cfg.model.p);

  omrf::EstimateResult result;
  if (cfg.estimate.estimator == "mple") {
    result = omrf::mple(data, cfg.model, has_structure ? &structure : nullptr);
  } else if (cfg.estimate.estimator == "map") {
    result = omrf::mple(data, cfg.model, has_structure ? &structure : nullptr, &cfg.prior);
  } else {
    omrf::EstimateResult start = omrf::map_pseudo(data, cfg.model, cfg.prior);
    omrf::RobbinsMonroOptions rm;
    rm.iterations = cfg.estimate.rm_iterations;
    rm.mc_samples = std::max(100, cfg.mc_samples.outer / std::max(1, rm.iterations));
    rm.seed = omrf::derive_seed(cfg.seed, 101);
    result = omrf::robbins_monro(data, cfg.model, cfg.prior, start.theta_star, rm);
  }
  json out = omrf::to_json(result);
  out["estimator"] = cfg.estimate.estimator;
  out["parameter_names"] = cfg.model.parameter_names();
  omrf::atomic_write_text(fs::path(cfg.io.out_dir) / "estimate.json", out.dump(2) + "\n");
  std::cerr << "fit: " << result.message << " (|grad| = " << result.final_gradient_norm << ")\n";
  return 0;
}

omrf::MethodOptions method_options(const omrf::RunConfig& cfg) {
  omrf::MethodOptions opts;
  opts.mc_outer = cfg.mc_samples.outer;
  opts.rm_iterations = cfg.estimate.rm_iterations;
  return opts;
}

int cmd_sample(const omrf::RunConfig& cfg) {
  omrf::Dataset data = load_dataset(cfg);
  omrf::Chain chain = omrf::run_method(cfg.method, data, cfg.model, cfg.prior, cfg.sampler,
                                       method_options(cfg));
  fs::path csv = fs::path(cfg.io.out_dir) / ("chain_" + cfg.method + ".csv");
  omrf::write_chain_csv(chain, csv, sidecar_of(csv), cfg.model.parameter_names());
  std::cerr << "sample: " << cfg.method << " acceptance rate " << chain.acceptance_rate
            << ", wall time " << chain.wall_time_seconds << "s\n";
  return 0;
}

int cmd_calibrate(const omrf::RunConfig& cfg) {
  if (cfg.method != "ph-ghw" && cfg.method != "ph-rm" && cfg.method != "ph-mch") {
    throw omrf::ConfigError("calibrate requires method ph-ghw, ph-rm, or ph-mch; got '" +
                            cfg.method + "'");
  }
  if (cfg.io.chain.empty()) throw omrf::ConfigError("io.chain is required");
  omrf::Dataset data = load_dataset(cfg);
  omrf::Chain chain = omrf::read_chain_csv(cfg.io.chain, sidecar_of(cfg.io.chain));
  if (chain.has_beta()) {
    throw omrf::ValidationError("calibrate expects a theta-scale chain; got a rescaled one");
  }
  omrf::Vector center;
  omrf::RescalingVariant variant;
  omrf::MethodOptions opts = method_options(cfg);
  if (cfg.method == "ph-rm") {
    center = omrf::detail::rm_optimum(data, cfg.model, cfg.prior, cfg.sampler, opts).theta_star;
    variant = omrf::RescalingVariant::RM;
  } else {
    center = omrf::detail::retained_means(chain);
    variant = cfg.method == "ph-ghw" ? omrf::RescalingVariant::GHW : omrf::RescalingVariant::MCH;
  }
  omrf::Chain calibrated = omrf::detail::calibrated_chain(
      std::move(chain), data, cfg.model, cfg.prior, center, variant, cfg.method, opts, cfg.seed);
  fs::path csv = fs::path(cfg.io.out_dir) / ("chain_" + cfg.method + ".csv");
  omrf::write_chain_csv(calibrated, csv, sidecar_of(csv), cfg.model.parameter_names());
  std::cerr << "calibrate: wrote " << csv.string() << "\n";
  return 0;
}

int cmd_metrics(const omrf::RunConfig& cfg) {
  if (cfg.io.exact_chain.empty()) throw omrf::ConfigError("io.exact_chain is required");
  omrf::Chain exact_chain = omrf::read_chain_csv(cfg.io.exact_chain,
                                                 sidecar_of(cfg.io.exact_chain));
  std::vector<omrf::Chain> method_chains;
  for (const std::string& path : cfg.io.method_chains) {
    method_chains.push_back(omrf::read_chain_csv(path, sidecar_of(path)));
  }
  omrf::MetricsReport report =
      omrf::build_report(exact_chain, method_chains, cfg.model, cfg.prior, cfg.condition);
  fs::path out_dir = cfg.io.out_dir;
  omrf::atomic_write_text(out_dir / "report.json", omrf::to_json(report).dump(2) + "\n");
  omrf::write_metrics_csv(report, out_dir / "report.csv");
  std::cerr << "metrics: " << report.methods.size() << " methods, "
            << cfg.model.dim() << " parameters\n";
  return 0;
}

int cmd_benchmark(const omrf::RunConfig& cfg, const GlobalArgs& args) {
  if (cfg.benchmark.source.empty()) throw omrf::ConfigError("benchmark.source is required");
  omrf::Dataset source = omrf::read_dataset_csv(cfg.benchmark.source);
  omrf::BenchmarkOptions opts;
  opts.out_dir = cfg.io.out_dir;
  opts.threads = args.threads;
  opts.resume = args.resume;
  opts.seed = cfg.seed;
  opts.prior = cfg.prior;
  opts.sampler = cfg.sampler;
  opts.method_options = method_options(cfg);
  json manifest = omrf::run_benchmark(cfg.benchmark, source, opts);
  int done = 0, failed = 0;
  for (const json& cell : manifest.at("cells")) {
    std::string status = cell.at("status").get<std::string>();
    if (status == "done") ++done;
    else if (status != "pending") ++failed;
  }
  std::cerr << "benchmark: " << done << " cells done, " << failed << " failed\n";
  return failed == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian samplers for ordinal Markov random fields"};
  app.require_subcommand(1);
  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON run configuration")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", args.seed, "override the config seed");
  app.add_option("--out", args.out_dir, "override io.out_dir");
  app.add_option("--threads", args.threads, "worker threads for the benchmark grid");
  app.add_flag("--resume", args.resume, "skip benchmark cells with a completed report");
  app.option_defaults()->ignore_case();

  CLI::App* simulate = app.add_subcommand("simulate", "synthesize datasets from a source matrix");
  CLI::App* fit = app.add_subcommand("fit", "point estimation on a dataset");
  CLI::App* sample = app.add_subcommand("sample", "run the configured posterior sampler");
  CLI::App* calibrate = app.add_subcommand("calibrate", "post-hoc correction of a stored chain");
  CLI::App* metrics = app.add_subcommand("metrics", "compare stored chains against exact");
  CLI::App* benchmark = app.add_subcommand("benchmark", "run the condition grid");
  // global options may trail the subcommand name
  for (CLI::App* sub : {simulate, fit, sample, calibrate, metrics, benchmark}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    // bad invocations are configuration errors; --help and --version stay 0
    return code == 0 ? 0 : 2;
  }

  try {
    omrf::RunConfig cfg = load_config(args);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (sample->parsed()) return cmd_sample(cfg);
    if (calibrate->parsed()) return cmd_calibrate(cfg);
    if (metrics->parsed()) return cmd_metrics(cfg);
    if (benchmark->parsed()) return cmd_benchmark(cfg, args);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const omrf::CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return 3;
  } catch (const omrf::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const omrf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const omrf::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
