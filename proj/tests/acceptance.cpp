// Acceptance gate. Each criterion prints one PASS/FAIL line with the
// measured quantity next to its bound; the exit code is the number of
// failed criteria in the requested group.
//
// Groups: quick (1, 2, 4, 12), exact (3), study (5, 6, 7, 8, 10),
// ess (9), refit (11), all.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "omrf/io.hpp"
#include "omrf/methods.hpp"
#include "omrf/simulate.hpp"

using namespace omrf;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::ostringstream line;
  line << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - " << detail;
  std::cout << line.str() << std::endl;
  if (!pass) ++g_failures;
}

void note(const std::string& text) { std::cout << "# " << text << std::endl; }

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

// Index maps recovered from the published parameter names, so the oracle
// below shares no index arithmetic with the library.
struct NameIndex {
  std::map<std::pair<int, int>, int> threshold;    // (variable, level) -> k, 1-based ids
  std::map<std::pair<int, int>, int> interaction;  // (i, j), i < j, 1-based ids
};

NameIndex index_from_names(const std::vector<std::string>& names) {
  NameIndex out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    int a = 0, b = 0;
    if (std::sscanf(names[k].c_str(), "mu_%d_%d", &a, &b) == 2) {
      out.threshold[{a, b}] = static_cast<int>(k);
    } else if (std::sscanf(names[k].c_str(), "theta_%d_%d", &a, &b) == 2) {
      out.interaction[{a, b}] = static_cast<int>(k);
    } else {
      throw std::runtime_error("unparseable parameter name " + names[k]);
    }
  }
  return out;
}

double oracle_energy(const std::vector<int>& x, const Vector& theta, const NameIndex& idx) {
  const int p = static_cast<int>(x.size());
  double e = 0.0;
  for (int i = 0; i < p; ++i) {
    if (x[i] > 0) e += theta[idx.threshold.at({i + 1, x[i]})];
    for (int j = i + 1; j < p; ++j) {
      if (x[i] > 0 && x[j] > 0) {
        e += theta[idx.interaction.at({i + 1, j + 1})] * x[i] * x[j];
      }
    }
  }
  return e;
}

double logsumexp(const std::vector<double>& v) {
  double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double e : v) s += std::exp(e - mx);
  return mx + std::log(s);
}

// Iterates every state of {0..m}^p through an odometer.
template <typename F>
void oracle_states(int p, int m, F&& fn) {
  std::vector<int> x(p, 0);
  while (true) {
    fn(x);
    int i = 0;
    while (i < p && ++x[i] > m) x[i++] = 0;
    if (i == p) return;
  }
}

Dataset random_dataset(int n, int p, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cat(0, m);
  Dataset d;
  d.values.resize(n, p);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < p; ++c) d.values(r, c) = cat(rng);
  }
  return d;
}

Vector random_theta(const ModelSpec& spec, std::uint64_t seed, double scale = 0.8) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector theta(spec.dim());
  for (int k = 0; k < spec.dim(); ++k) theta[k] = u(rng);
  return theta;
}

// ---------------------------------------------------------------- quick --

void criterion_1() {
  double worst = 0.0;
  for (auto [p, m] : std::vector<std::pair<int, int>>{{2, 1}, {3, 1}, {2, 2}, {3, 2}}) {
    ModelSpec spec{p, m};
    NameIndex idx = index_from_names(spec.parameter_names());
    Vector theta = random_theta(spec, 11 * p + m);
    Dataset data = random_dataset(25, p, m, 7 * p + m);

    std::vector<double> energies;
    oracle_states(p, m, [&](const std::vector<int>& x) {
      energies.push_back(oracle_energy(x, theta, idx));
    });
    double log_z = logsumexp(energies);

    double sum_e = 0.0;
    std::set<std::vector<int>> distinct;
    for (int r = 0; r < data.n(); ++r) {
      std::vector<int> row(p);
      for (int c = 0; c < p; ++c) row[c] = data.values(r, c);
      sum_e += oracle_energy(row, theta, idx);
      distinct.insert(row);
    }
    double full = sum_e - data.n() * log_z;

    double pseudo = 0.0;
    for (int r = 0; r < data.n(); ++r) {
      std::vector<int> row(p);
      for (int c = 0; c < p; ++c) row[c] = data.values(r, c);
      for (int i = 0; i < p; ++i) {
        std::vector<double> cond(m + 1, 0.0);
        for (int c = 1; c <= m; ++c) {
          double e = theta[idx.threshold.at({i + 1, c})];
          for (int j = 0; j < p; ++j) {
            if (j == i || row[j] == 0) continue;
            auto key = i < j ? std::make_pair(i + 1, j + 1) : std::make_pair(j + 1, i + 1);
            e += theta[idx.interaction.at(key)] * c * row[j];
          }
          cond[c] = e;
        }
        pseudo += cond[row[i]] - logsumexp(cond);
      }
    }

    std::vector<double> seen;
    for (const auto& s : distinct) seen.push_back(oracle_energy(s, theta, idx));
    double empirical = sum_e - data.n() * logsumexp(seen);

    auto rel = [](double got, double want) {
      return std::abs(got - want) / std::max(1.0, std::abs(want));
    };
    worst = std::max(worst, rel(log_partition_exact(theta, spec), log_z));
    worst = std::max(worst, rel(full_log_likelihood(data, spec, theta), full));
    worst = std::max(worst, rel(pseudo_log_likelihood(data, spec, theta), pseudo));
    worst = std::max(worst, rel(empirical_log_likelihood(data, spec, theta), empirical));
  }
  report(1, worst < 1e-12,
         "likelihood oracles, max scaled deviation " + fmt(worst) + " (bound 1e-12)");
}

void criterion_2() {
  const double h = 1e-5;
  double worst_grad = 0.0;
  double worst_hess = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    int p = 2 + inst % 3;
    int m = 1 + (inst / 3) % 2;
    ModelSpec spec{p, m};
    Vector theta = random_theta(spec, 100 + inst);
    Dataset data = random_dataset(30, p, m, 200 + inst);
    const int d = spec.dim();

    Vector g_pseudo = pseudo_gradient(data, spec, theta);
    Vector g_full = full_gradient(data, spec, theta);
    Matrix hess = pseudo_score_and_curvature(data, spec, theta).hessian;

    double scale_p = std::max(1.0, g_pseudo.cwiseAbs().maxCoeff());
    double scale_f = std::max(1.0, g_full.cwiseAbs().maxCoeff());
    double scale_h = std::max(1.0, hess.cwiseAbs().maxCoeff());
    for (int k = 0; k < d; ++k) {
      Vector up = theta, dn = theta;
      up[k] += h;
      dn[k] -= h;
      double fd_p = (pseudo_log_likelihood(data, spec, up) - pseudo_log_likelihood(data, spec, dn)) /
                    (2 * h);
      double fd_f =
          (full_log_likelihood(data, spec, up) - full_log_likelihood(data, spec, dn)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(g_pseudo[k] - fd_p) / scale_p);
      worst_grad = std::max(worst_grad, std::abs(g_full[k] - fd_f) / scale_f);
      Vector fd_col = (pseudo_gradient(data, spec, up) - pseudo_gradient(data, spec, dn)) / (2 * h);
      worst_hess = std::max(worst_hess, (hess.col(k) - fd_col).cwiseAbs().maxCoeff() / scale_h);
    }
  }
  bool pass = worst_grad < 1e-6 && worst_hess < 1e-6;
  report(2, pass,
         "finite-difference check over 20 instances, gradient rel err " + fmt(worst_grad) +
             ", curvature rel err " + fmt(worst_hess) + " (bound 1e-6)");
}

void criterion_4() {
  double worst = 0.0;
  PriorSpec prior;
  for (int inst = 0; inst < 3; ++inst) {
    int p = 3 + inst;
    int m = 1 + inst % 2;
    ModelSpec spec{p, m};
    Vector theta_gen = random_theta(spec, 300 + inst, 0.5);
    Dataset data = gibbs_synthesize_random_init(theta_gen, spec, 150, 60, 400 + inst);
    Vector mode = map_pseudo(data, spec, prior).theta_star;

    CurvatureBundle bundle = curvature_bundle(data, spec, mode, prior);
    Matrix precision = -bundle.H;
    precision.diagonal() -= bundle.H_theta_diag;
    Matrix sigma_pseudo = pd_inverse(precision, "pseudo posterior precision");

    BuildRescalingOptions mc;
    mc.mc_samples = 300;
    mc.sweeps = 15;
    mc.seed = 500 + inst;
    for (auto variant :
         {RescalingVariant::GHW, RescalingVariant::RM, RescalingVariant::MCH}) {
      RescalingMatrix r = build_rescaling(data, spec, mode, prior, variant, mc);
      Matrix lhs = r.A * sigma_pseudo * r.A.transpose();
      Matrix rhs = r.Gamma * r.Gamma.transpose();
      worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
  }

  // identity map: the rescaled run must reproduce the plain pseudo chain bitwise
  ModelSpec spec{3, 1};
  Vector theta_gen = random_theta(spec, 310, 0.5);
  Dataset data = gibbs_synthesize_random_init(theta_gen, spec, 120, 60, 410);
  SamplerConfig cfg;
  cfg.iterations = 800;
  cfg.burn_in = 200;
  cfg.seed = 99;
  Chain pseudo = sample_pseudo(data, spec, prior, cfg);
  Vector mode = map_pseudo(data, spec, prior).theta_star;
  Chain ident = sample_core(data, spec, prior, RescalingMatrix::identity_at(mode), cfg);
  bool bitwise = (ident.draws - pseudo.draws).cwiseAbs().maxCoeff() == 0.0 &&
                 ident.accept_trace == pseudo.accept_trace &&
                 ident.acceptance_rate == pseudo.acceptance_rate;

  bool pass = worst < 1e-10 && bitwise;
  report(4, pass,
         "factor identity max deviation " + fmt(worst) + " (bound 1e-10), identity-map chain " +
             (bitwise ? "bitwise equal to pseudo" : "DIFFERS from pseudo"));
}

void criterion_12() {
  std::mt19937_64 rng(12121);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 40000;
  Vector a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = z(rng);
    b[i] = 1.0 + z(rng);
  }
  double eta = overlap_index(a, b);
  bool ok_eta = std::abs(eta - 0.617) <= 0.02;

  Vector post(60000);
  for (int i = 0; i < post.size(); ++i) post[i] = 0.5 * z(rng);
  double bf = std::exp(savage_dickey(post, 1.0).log_bf);
  bool ok_bf = std::abs(bf - 2.0) <= 0.15;

  const double rho = 0.5;
  const int t = 20000;
  Vector x(t);
  x[0] = z(rng);
  for (int i = 1; i < t; ++i) x[i] = rho * x[i - 1] + std::sqrt(1 - rho * rho) * z(rng);
  double got = ess(x);
  double want = t * (1 - rho) / (1 + rho);
  bool ok_ess = std::abs(got - want) / want <= 0.15;

  report(12, ok_eta && ok_bf && ok_ess,
         "overlap " + fmt(eta) + " (0.617 +- 0.02), Savage-Dickey BF " + fmt(bf) +
             " (2.0 +- 0.15), AR(1) ess " + fmt(got) + " vs " + fmt(want) + " (+- 15%)");
}

// ---------------------------------------------------------------- exact --

void criterion_3() {
  ModelSpec spec{2, 1};
  PriorSpec prior;
  NameIndex idx = index_from_names(spec.parameter_names());
  Vector theta_true(3);
  theta_true[idx.threshold.at({1, 1})] = -0.3;
  theta_true[idx.threshold.at({2, 1})] = 0.4;
  theta_true[idx.interaction.at({1, 2})] = 0.8;
  Dataset data = gibbs_synthesize_random_init(theta_true, spec, 200, 200, 303);

  SamplerConfig cfg;
  cfg.iterations = 30000;
  cfg.burn_in = 6000;
  cfg.seed = 13;
  Chain chain = sample_exact(data, spec, prior, cfg);

  // posterior mode and curvature for grid placement
  Vector mode = map_pseudo(data, spec, prior).theta_star;
  for (int it = 0; it < 40; ++it) {
    EnumeratedMoments mom = enumerate_moments(mode, spec, true);
    Matrix hess = -double(data.n()) * mom.stat_cov;
    hess.diagonal() += prior_eval(mode, spec, prior).curvature_diag;
    Vector grad = full_gradient(data, spec, mode, &prior);
    Vector step = (-hess).ldlt().solve(grad);
    mode += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12) break;
  }
  EnumeratedMoments mom = enumerate_moments(mode, spec, true);
  Matrix hess = -double(data.n()) * mom.stat_cov;
  hess.diagonal() += prior_eval(mode, spec, prior).curvature_diag;
  Vector sd0 = pd_inverse(-hess, "grid curvature").diagonal().cwiseSqrt();

  const int g = 101;
  Vector s_obs = sufficient_statistics(data, spec, StatKind::full).values;
  std::vector<Vector> axes(3, Vector(g));
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < g; ++i) axes[k][i] = mode[k] + sd0[k] * (-6.0 + 12.0 * i / (g - 1));
  }
  std::vector<double> logw(static_cast<std::size_t>(g) * g * g);
  double mx = -std::numeric_limits<double>::infinity();
  Vector point(3);
  for (int i0 = 0; i0 < g; ++i0) {
    for (int i1 = 0; i1 < g; ++i1) {
      for (int i2 = 0; i2 < g; ++i2) {
        point << axes[0][i0], axes[1][i1], axes[2][i2];
        double lp = s_obs.dot(point) - data.n() * log_partition_exact(point, spec) +
                    prior_eval(point, spec, prior).log_density;
        logw[(static_cast<std::size_t>(i0) * g + i1) * g + i2] = lp;
        mx = std::max(mx, lp);
      }
    }
  }
  double z_sum = 0.0;
  Vector mean = Vector::Zero(3);
  for (int i0 = 0; i0 < g; ++i0) {
    for (int i1 = 0; i1 < g; ++i1) {
      for (int i2 = 0; i2 < g; ++i2) {
        double w = std::exp(logw[(static_cast<std::size_t>(i0) * g + i1) * g + i2] - mx);
        z_sum += w;
        mean[0] += w * axes[0][i0];
        mean[1] += w * axes[1][i1];
        mean[2] += w * axes[2][i2];
      }
    }
  }
  mean /= z_sum;
  Vector var = Vector::Zero(3);
  for (int i0 = 0; i0 < g; ++i0) {
    for (int i1 = 0; i1 < g; ++i1) {
      for (int i2 = 0; i2 < g; ++i2) {
        double w = std::exp(logw[(static_cast<std::size_t>(i0) * g + i1) * g + i2] - mx);
        var[0] += w * (axes[0][i0] - mean[0]) * (axes[0][i0] - mean[0]);
        var[1] += w * (axes[1][i1] - mean[1]) * (axes[1][i1] - mean[1]);
        var[2] += w * (axes[2][i2] - mean[2]) * (axes[2][i2] - mean[2]);
      }
    }
  }
  Vector grid_sd = (var / z_sum).cwiseSqrt();

  bool pass = true;
  std::ostringstream detail;
  for (int k = 0; k < 3; ++k) {
    Vector col = chain.retained_column(k);
    double n_eff = ess(col);
    double sd_hat = sample_sd(col);
    double tol_mean = std::max(0.02, 3.0 * sd_hat / std::sqrt(n_eff));
    double tol_sd = std::max(0.02, 3.0 * sd_hat / std::sqrt(2.0 * n_eff));
    double d_mean = std::abs(col.mean() - mean[k]);
    double d_sd = std::abs(sd_hat - grid_sd[k]);
    if (d_mean > tol_mean || d_sd > tol_sd) pass = false;
    if (k) detail << ", ";
    detail << spec.parameter_names()[k] << " dmean " << fmt(d_mean) << "/" << fmt(tol_mean)
           << " dsd " << fmt(d_sd) << "/" << fmt(tol_sd);
  }
  report(3, pass, "sampler vs grid quadrature: " + detail.str());
}

// ---------------------------------------------------------------- study --

struct StudyColumns {
  std::vector<double> sd_pseudo, sd_core, sd_adacore, sd_phghw;  // absent-edge cells
  std::vector<double> eta_pseudo, eta_core;                      // all interactions
  int core_beats_pseudo = 0, eta_cells = 0;
  std::vector<double> bf_gap_core;                         // absent-edge cells
  int inflated = 0, near_zero_cells = 0;                   // pseudo BF vs exact at near-zero modes
  std::vector<double> corr_exact, corr_core;               // pooled pairs
};

GraphStructure draw_study_structure(int p, std::uint64_t seed) {
  StructureParams params;
  params.density = 0.6;
  for (std::uint64_t off = 0;; ++off) {
    GraphStructure g = gen_structure(StructureType::Random, p, params, seed + 1000 * off);
    int total = p * (p - 1) / 2;
    if (g.n_edges() >= 1 && g.n_edges() <= total - 2) return g;
  }
}

void run_study_replicate(int rep, StudyColumns& acc) {
  const int p = 6;
  ModelSpec spec{p, 1};
  PriorSpec prior;
  std::uint64_t base = 5000 + 17 * std::uint64_t(rep);
  GraphStructure structure = draw_study_structure(p, base);

  // positive couplings in the strong-association regime with thresholds
  // centering each conditional: this is where the pseudo posterior visibly
  // deflates; weak or frustrated couplings make pseudo near-exact and the
  // comparison vacuous
  std::mt19937_64 rng(base + 1);
  std::uniform_real_distribution<double> u_thr(-0.3, 0.3);
  std::uniform_real_distribution<double> u_int(1.6, 2.6);
  Vector theta_true = Vector::Zero(spec.dim());
  for (int k = spec.n_thresholds(); k < spec.dim(); ++k) {
    auto [i, j] = spec.decode_interaction(k);
    if (structure.has_edge(i, j)) theta_true[k] = u_int(rng);
  }
  for (int i = 0; i < p; ++i) {
    double coupling_sum = 0.0;
    for (int j = 0; j < p; ++j) {
      if (j != i && structure.has_edge(i, j)) {
        int k = spec.interaction_index(std::min(i, j), std::max(i, j));
        coupling_sum += theta_true[k];
      }
    }
    theta_true[spec.threshold_index(i, 1)] = -0.5 * coupling_sum + u_thr(rng);
  }
  Dataset data = gibbs_synthesize_random_init(theta_true, spec, 1000, 300, base + 2);

  SamplerConfig cfg;
  cfg.iterations = 12000;
  cfg.burn_in = 4000;
  cfg.seed = base + 3;
  Chain exact = run_method("exact", data, spec, prior, cfg);
  std::vector<Chain> methods;
  for (const char* name : {"pseudo", "core", "adacore", "ph-ghw"}) {
    cfg.seed += 1;
    methods.push_back(run_method(name, data, spec, prior, cfg));
  }
  Condition cond{1000, p, "random", "study rep " + std::to_string(rep)};
  MetricsReport rpt = build_report(exact, methods, spec, prior, cond);
  const MethodReport& r_exact = rpt.methods[0];
  const MethodReport& r_pseudo = rpt.methods[1];
  const MethodReport& r_core = rpt.methods[2];
  const MethodReport& r_adacore = rpt.methods[3];
  const MethodReport& r_phghw = rpt.methods[4];

  for (int k = spec.n_thresholds(); k < spec.dim(); ++k) {
    auto [i, j] = spec.decode_interaction(k);
    bool absent = !structure.has_edge(i, j);
    acc.eta_pseudo.push_back(r_pseudo.params[k].overlap);
    acc.eta_core.push_back(r_core.params[k].overlap);
    acc.eta_cells += 1;
    if (r_core.params[k].overlap > r_pseudo.params[k].overlap) acc.core_beats_pseudo += 1;
    if (!absent) continue;
    acc.sd_pseudo.push_back(r_pseudo.params[k].sd_ratio);
    acc.sd_core.push_back(r_core.params[k].sd_ratio);
    acc.sd_adacore.push_back(r_adacore.params[k].sd_ratio);
    acc.sd_phghw.push_back(r_phghw.params[k].sd_ratio);
    acc.bf_gap_core.push_back(std::abs(r_core.params[k].log_bf - r_exact.params[k].log_bf));
    Vector col = exact.retained_column(k);
    std::vector<double> vals(col.data(), col.data() + col.size());
    if (std::abs(half_sample_mode(vals)) < 0.02) {
      acc.near_zero_cells += 1;
      if (r_pseudo.params[k].log_bf > r_exact.params[k].log_bf) acc.inflated += 1;
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < spec.dim(); ++i) {
    for (int j = i + 1; j < spec.dim(); ++j) pairs.push_back({i, j});
  }
  CorrelationReport ce = posterior_correlations(exact, pairs);
  CorrelationReport cc = posterior_correlations(methods[1], pairs);
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    if (std::isfinite(ce.values[q]) && std::isfinite(cc.values[q])) {
      acc.corr_exact.push_back(ce.values[q]);
      acc.corr_core.push_back(cc.values[q]);
    }
  }
}

void run_study() {
  StudyColumns acc;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    run_study_replicate(rep, acc);
    note("study replicate " + std::to_string(rep + 1) + "/" + std::to_string(reps) + " done");
  }

  double m5 = median(acc.sd_pseudo);
  report(5, m5 >= 0.55 && m5 <= 0.85,
         "median sd(pseudo)/sd(exact) on absent-edge interactions " + fmt(m5) +
             " over " + std::to_string(acc.sd_pseudo.size()) + " cells (bound [0.55, 0.85])");

  double m_core = median(acc.sd_core);
  double m_ada = median(acc.sd_adacore);
  double m_ph = median(acc.sd_phghw);
  bool ok6 = m_core >= 0.88 && m_core <= 1.12 && m_ada >= 0.88 && m_ada <= 1.12 &&
             m_ph >= 0.88 && m_ph <= 1.12;
  report(6, ok6,
         "median sd ratios vs exact: core " + fmt(m_core) + ", adacore " + fmt(m_ada) +
             ", ph-ghw " + fmt(m_ph) + " (bound [0.88, 1.12])");

  double eta_p = median(acc.eta_pseudo);
  double eta_c = median(acc.eta_core);
  double frac = double(acc.core_beats_pseudo) / double(acc.eta_cells);
  bool ok7 = eta_p <= 0.80 && eta_c >= 0.85 && frac >= 0.80;
  report(7, ok7,
         "interaction overlap medians: pseudo " + fmt(eta_p) + " (<= 0.80), core " + fmt(eta_c) +
             " (>= 0.85), core > pseudo in " + fmt(100 * frac) + "% of cells (>= 80%)");

  double gap = median(acc.bf_gap_core);
  double infl =
      acc.near_zero_cells ? double(acc.inflated) / double(acc.near_zero_cells) : 0.0;
  bool ok8 = gap <= 1.0 && acc.near_zero_cells > 0 && infl >= 0.70;
  report(8, ok8,
         "median |log BF(core) - log BF(exact)| on absent edges " + fmt(gap) +
             " (<= 1.0); pseudo BF above exact in " + fmt(100 * infl) + "% of " +
             std::to_string(acc.near_zero_cells) + " near-zero-mode cells (>= 70%)");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = double(acc.corr_exact.size());
  for (std::size_t q = 0; q < acc.corr_exact.size(); ++q) {
    sx += acc.corr_exact[q];
    sy += acc.corr_core[q];
    sxx += acc.corr_exact[q] * acc.corr_exact[q];
    sxy += acc.corr_exact[q] * acc.corr_core[q];
  }
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double intercept = (sy - slope * sx) / n;
  bool ok10 = slope >= 0.8 && slope <= 1.2 && intercept >= -0.1 && intercept <= 0.1;
  report(10, ok10,
         "core-on-exact posterior correlation regression over " +
             std::to_string(acc.corr_exact.size()) + " pairs: slope " + fmt(slope) +
             " ([0.8, 1.2]), intercept " + fmt(intercept) + " ([-0.1, 0.1])");
}

// ------------------------------------------------------------------ ess --

double chain_ess_median(const Chain& chain) {
  std::vector<double> per_param;
  for (int k = 0; k < chain.reported().cols(); ++k) {
    per_param.push_back(ess(chain.retained_column(k)));
  }
  return median(per_param);
}

void run_ess() {
  const int p = 6;
  ModelSpec spec{p, 1};
  PriorSpec prior;
  const std::vector<int> sizes{250, 500, 1000};
  const int reps = 7;

  std::map<int, std::vector<double>> ess_dmh, ess_core;
  std::vector<double> ess_ada;
  for (int rep = 0; rep < reps; ++rep) {
    std::uint64_t base = 9000 + 23 * std::uint64_t(rep);
    GraphStructure structure = draw_study_structure(p, base);
    std::mt19937_64 rng(base + 1);
    // strong positive couplings with centered conditionals: auxiliary Gibbs
    // mixes slowly here, so the fixed inner budget degrades visibly with n
    std::uniform_real_distribution<double> u_thr(-0.3, 0.3);
    std::uniform_real_distribution<double> u_int(0.8, 1.4);
    Vector theta_true = Vector::Zero(spec.dim());
    for (int k = spec.n_thresholds(); k < spec.dim(); ++k) {
      auto [i, j] = spec.decode_interaction(k);
      if (structure.has_edge(i, j)) theta_true[k] = u_int(rng);
    }
    for (int i = 0; i < p; ++i) {
      double coupling_sum = 0.0;
      for (int j = 0; j < p; ++j) {
        if (j != i && structure.has_edge(i, j)) {
          coupling_sum += theta_true[spec.interaction_index(std::min(i, j), std::max(i, j))];
        }
      }
      theta_true[spec.threshold_index(i, 1)] = -0.5 * coupling_sum + u_thr(rng);
    }
    for (int n : sizes) {
      Dataset data =
          gibbs_synthesize_random_init(theta_true, spec, n, 300, base + 2 + n);
      SamplerConfig cfg;
      cfg.iterations = 6000;
      cfg.burn_in = 2000;
      cfg.seed = base + 5 + n;
      ess_dmh[n].push_back(chain_ess_median(run_method("dmh", data, spec, prior, cfg)));
      cfg.seed += 1;
      ess_core[n].push_back(chain_ess_median(run_method("core", data, spec, prior, cfg)));
      if (n == 500) {
        cfg.seed += 1;
        ess_ada.push_back(chain_ess_median(run_method("adadmh", data, spec, prior, cfg)));
      }
    }
    note("ess replicate " + std::to_string(rep + 1) + "/" + std::to_string(reps) + " done");
  }

  double ada = median(ess_ada);
  double core500 = median(ess_core[500]);
  std::vector<double> dmh_by_n, core_by_n;
  for (int n : sizes) {
    dmh_by_n.push_back(median(ess_dmh[n]));
    core_by_n.push_back(median(ess_core[n]));
  }
  bool ok_ratio = ada < 0.25 * core500;
  bool ok_mono = dmh_by_n[0] > dmh_by_n[1] && dmh_by_n[1] > dmh_by_n[2];
  double core_spread = (*std::max_element(core_by_n.begin(), core_by_n.end()) -
                        *std::min_element(core_by_n.begin(), core_by_n.end())) /
                       median(core_by_n);
  bool ok_stable = core_spread < 0.10;
  report(9, ok_ratio && ok_mono && ok_stable,
         "median ess: adadmh " + fmt(ada) + " vs 0.25 x core " + fmt(0.25 * core500) +
             "; dmh over n {250, 500, 1000} = {" + fmt(dmh_by_n[0]) + ", " + fmt(dmh_by_n[1]) +
             ", " + fmt(dmh_by_n[2]) + "} (required: decreasing); core spread " +
             fmt(100 * core_spread) + "% of median (required < 10%)");
}

// ---------------------------------------------------------------- refit --

void run_refit() {
  const char* data_dir = std::getenv("OMRF_DATA");
  if (!data_dir) {
    report(11, false, "OMRF_DATA is not set; cannot locate the bundled source data");
    return;
  }
  SimulationPlan plan;
  plan.source = read_dataset_csv(std::string(data_dir) + "/survey_synthetic.csv");
  plan.N = 2000;
  plan.P = 6;
  plan.structure = StructureType::Random;
  plan.structure_params.density = 0.3;
  plan.k_structures = 3;
  plan.k_samples = 1;
  plan.gibbs_sweeps = 100;
  plan.seed = 77;

  std::vector<SimulatedDataset> sims = run_simulation_plan(plan);
  bool pass = true;
  double worst_z = 0.0;
  int coords = 0;
  bool zeros_exact = true;
  for (const SimulatedDataset& sim : sims) {
    EstimateResult refit = mple(sim.data, sim.spec, &sim.structure);
    if (!refit.converged) {
      pass = false;
      note("refit did not converge on structure " + std::to_string(sim.structure_index));
      continue;
    }
    CurvatureBundle bundle = curvature_bundle(sim.data, sim.spec, refit.theta_star, PriorSpec{});
    Vector se = ghw_covariance(bundle).diagonal().cwiseSqrt();
    std::vector<int> free_idx = free_indices(sim.spec, &sim.structure);
    std::set<int> free_set(free_idx.begin(), free_idx.end());
    for (int k = 0; k < sim.spec.dim(); ++k) {
      if (free_set.count(k)) {
        double z = std::abs(refit.theta_star[k] - sim.true_theta[k]) / se[k];
        worst_z = std::max(worst_z, z);
        if (z > 3.0) pass = false;
        ++coords;
      } else if (refit.theta_star[k] != 0.0 || sim.true_theta[k] != 0.0) {
        zeros_exact = false;
        pass = false;
      }
    }
  }
  report(11, pass && zeros_exact,
         "refit over " + std::to_string(sims.size()) + " synthesized datasets, " +
             std::to_string(coords) + " free coordinates, max |z| " + fmt(worst_z) +
             " (bound 3), constrained zeros " + (zeros_exact ? "exact" : "VIOLATED"));
}

}  // namespace

int main(int argc, char** argv) {
  std::string group = argc > 1 ? argv[1] : "all";
  try {
    if (group == "quick" || group == "all") {
      criterion_1();
      criterion_2();
      criterion_4();
      criterion_12();
    }
    if (group == "exact" || group == "all") criterion_3();
    if (group == "study" || group == "all") run_study();
    if (group == "ess" || group == "all") run_ess();
    if (group == "refit" || group == "all") run_refit();
    if (group != "quick" && group != "exact" && group != "study" && group != "ess" &&
        group != "refit" && group != "all") {
      std::cerr << "unknown group " << group << " (quick, exact, study, ess, refit, all)\n";
      return 64;
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance harness aborted: " << e.what() << "\n";
    return 70;
  }
  return g_failures;
}
