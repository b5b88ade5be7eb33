#pragma once

#include <atomic>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "omrf/cli_config.hpp"
#include "omrf/io.hpp"
#include "omrf/methods.hpp"
#include "omrf/metrics.hpp"
#include "omrf/simulate.hpp"

namespace omrf {

struct BenchmarkCell {
  std::string structure;
  int P = 0;
  int N = 0;
  int replicate = 0;
  std::string id;
};

inline std::vector<BenchmarkCell> benchmark_cells(const BenchmarkGridConfig& grid) {
  std::vector<BenchmarkCell> cells;
  for (const std::string& s : grid.structures) {
    for (int p : grid.p_list) {
      for (int n : grid.n_list) {
        for (int r = 0; r < grid.replicates; ++r) {
          BenchmarkCell cell{s, p, n, r, ""};
          cell.id = s + "_p" + std::to_string(p) + "_n" + std::to_string(n) + "_rep" +
                    std::to_string(r);
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

struct BenchmarkOptions {
  std::filesystem::path out_dir = "bench";
  int threads = 1;
  bool resume = false;
  std::uint64_t seed = 1;
  PriorSpec prior;
  SamplerConfig sampler;
  MethodOptions method_options;
};

namespace detail {

inline double quantile_of(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return sorted_quantile(values, q);
}

// Pools replicate values per (condition, method, parameter block, metric)
// and emits median with the 5th and 95th percentiles.
inline void write_benchmark_aggregate(const std::vector<MetricsReport>& reports,
                                      const std::filesystem::path& path) {
  struct Key {
    std::string structure;
    int P;
    int N;
    std::string method;
    std::string block;
    std::string metric;
    bool operator<(const Key& o) const {
      return std::tie(structure, P, N, method, block, metric) <
             std::tie(o.structure, o.P, o.N, o.method, o.block, o.metric);
    }
  };
  std::map<Key, std::vector<double>> groups;
  for (const MetricsReport& report : reports) {
    const Condition& c = report.condition;
    for (const MethodReport& mr : report.methods) {
      groups[{c.structure, c.P, c.N, mr.method, "-", "wall_time_seconds"}].push_back(
          mr.wall_time_seconds);
      groups[{c.structure, c.P, c.N, mr.method, "-", "acceptance_rate"}].push_back(
          mr.acceptance_rate);
      for (const ParamMetrics& pm : mr.params) {
        std::string block = pm.name.rfind("mu_", 0) == 0 ? "threshold" : "interaction";
        Key base{c.structure, c.P, c.N, mr.method, block, ""};
        base.metric = "overlap";
        groups[base].push_back(pm.overlap);
        base.metric = "log_bf";
        groups[base].push_back(pm.log_bf);
        base.metric = "sd_ratio";
        groups[base].push_back(pm.sd_ratio);
        base.metric = "ess";
        groups[base].push_back(pm.ess);
      }
    }
  }
  std::ostringstream out;
  out.precision(10);
  out << "structure,p,n,method,param_block,metric,median,q05,q95,count\n";
  for (const auto& [key, values] : groups) {
    out << key.structure << "," << key.P << "," << key.N << "," << key.method << ","
        << key.block << "," << key.metric << "," << quantile_of(values, 0.5) << ","
        << quantile_of(values, 0.05) << "," << quantile_of(values, 0.95) << ","
        << values.size() << "\n";
  }
  atomic_write_text(path, out.str());
}

}  // namespace detail

// Runs the condition grid with replicate-level parallelism. Each cell
// simulates one dataset, runs the exact reference plus the configured
// methods, and writes its report atomically; completed cells are skipped
// when resume is set. Returns the final manifest.
inline json run_benchmark(const BenchmarkGridConfig& grid, const Dataset& source,
                          const BenchmarkOptions& opts) {
  std::vector<BenchmarkCell> cells = benchmark_cells(grid);
  std::filesystem::path cells_dir = opts.out_dir / "cells";
  std::filesystem::create_directories(cells_dir);

  std::vector<std::string> status(cells.size(), "pending");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (opts.resume && std::filesystem::exists(cells_dir / cells[i].id / "report.json")) {
      status[i] = "done";
    }
  }
  auto manifest_json = [&]() {
    json list = json::array();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      list.push_back(json{{"id", cells[i].id},
                          {"structure", cells[i].structure},
                          {"p", cells[i].P},
                          {"n", cells[i].N},
                          {"replicate", cells[i].replicate},
                          {"status", status[i]}});
    }
    return json{{"cells", std::move(list)}};
  };
  atomic_write_text(opts.out_dir / "manifest.json", manifest_json().dump(2) + "\n");

  std::atomic<std::size_t> next{0};
  std::mutex status_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard<std::mutex> lock(status_mutex);
        if (status[i] == "done") continue;
      }
      const BenchmarkCell& cell = cells[i];
      std::string outcome = "done";
      try {
        std::uint64_t cell_seed = derive_seed(opts.seed, static_cast<std::uint64_t>(i));
        SimulationPlan plan;
        plan.source = source;
        plan.N = cell.N;
        plan.P = cell.P;
        plan.structure = structure_type_from_string(cell.structure);
        plan.k_structures = 1;
        plan.k_samples = 1;
        plan.gibbs_sweeps = grid.gibbs_sweeps;
        plan.seed = cell_seed;
        SimulatedDataset sim = run_simulation_plan(plan).at(0);

        SamplerConfig cfg = opts.sampler;
        cfg.iterations = grid.iterations;
        cfg.burn_in = grid.burn_in;
        cfg.seed = derive_seed(cell_seed, 7);
        Chain exact_chain = run_method("exact", sim.data, sim.spec, opts.prior, cfg,
                                       opts.method_options);
        std::vector<Chain> method_chains;
        for (const std::string& m : grid.methods) {
          SamplerConfig mcfg = cfg;
          mcfg.seed = derive_seed(cell_seed, 8 + method_chains.size());
          method_chains.push_back(
              run_method(m, sim.data, sim.spec, opts.prior, mcfg, opts.method_options));
        }
        Condition condition{cell.N, cell.P, cell.structure, cell.id};
        MetricsReport report =
            build_report(exact_chain, method_chains, sim.spec, opts.prior, condition);
        std::filesystem::path cell_dir = cells_dir / cell.id;
        atomic_write_text(cell_dir / "report.json", to_json(report).dump(2) + "\n");
        write_metrics_csv(report, cell_dir / "report.csv");
      } catch (const std::exception& e) {
        outcome = std::string("failed: ") + e.what();
      }
      std::lock_guard<std::mutex> lock(status_mutex);
      status[i] = outcome;
    }
  };

  int n_workers = std::max(1, opts.threads);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // aggregate whatever is complete, regardless of execution order
  std::vector<MetricsReport> reports;
  for (const BenchmarkCell& cell : cells) {
    std::filesystem::path path = cells_dir / cell.id / "report.json";
    if (std::filesystem::exists(path)) {
      reports.push_back(metrics_report_from_json(json::parse(read_text(path))));
    }
  }
  if (!reports.empty()) {
    detail::write_benchmark_aggregate(reports, opts.out_dir / "aggregate.csv");
  }
  json manifest = manifest_json();
  atomic_write_text(opts.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace omrf
