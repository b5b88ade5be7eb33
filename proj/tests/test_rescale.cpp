#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "omrf/estimate.hpp"
#include "omrf/model.hpp"
#include "omrf/rescale.hpp"

using namespace omrf;
using Catch::Approx;

namespace {

Matrix random_spd(int d, std::mt19937_64& rng, double ridge = 0.5) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix b(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) b(i, j) = normal(rng);
  }
  return b * b.transpose() + ridge * Matrix::Identity(d, d);
}

Dataset random_binary(int n, int p, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cat(0, 1);
  Dataset data;
  data.values.resize(n, p);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < p; ++c) data.values(r, c) = cat(rng);
  }
  return data;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("cholesky factor reproduces the matrix and respects triangularity") {
  std::mt19937_64 rng(201);
  for (int d : {2, 5, 9}) {
    Matrix m = random_spd(d, rng);
    Matrix L = cholesky_lower(m, "test");
    REQUIRE(max_abs(L * L.transpose() - m) < 1e-11);
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) REQUIRE(L(i, j) == 0.0);
    }
  }
}

TEST_CASE("cholesky jitter ladder rescues roundoff-indefinite input") {
  std::mt19937_64 rng(203);
  Matrix m = random_spd(4, rng, 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  // push the smallest eigenvalue slightly negative
  Matrix bad = m - (es.eigenvalues().minCoeff() + 5e-9) * Matrix::Identity(4, 4);
  Matrix L = cholesky_lower(bad, "test");
  REQUIRE(max_abs(L * L.transpose() - bad) < 1e-5);

  Matrix hopeless = -Matrix::Identity(3, 3);
  REQUIRE_THROWS_AS(cholesky_lower(hopeless, "test"), NumericalError);
}

TEST_CASE("pd_inverse inverts and symmetrizes") {
  std::mt19937_64 rng(207);
  Matrix m = random_spd(6, rng);
  Matrix inv = pd_inverse(m, "test");
  REQUIRE(max_abs(m * inv - Matrix::Identity(6, 6)) < 1e-10);
  REQUIRE(max_abs(inv - inv.transpose()) == 0.0);
}

TEST_CASE("curvature bundle: U is the sum of score outer products") {
  std::mt19937_64 rng(211);
  ModelSpec spec{3, 1};
  Dataset data = random_binary(50, 3, rng);
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  CurvatureBundle bundle = curvature_bundle(data, spec, center, prior);

  PseudoDerivatives der = pseudo_score_and_curvature(data, spec, center);
  Matrix u_direct = Matrix::Zero(spec.dim(), spec.dim());
  for (int r = 0; r < data.n(); ++r) {
    Vector s = der.scores.row(r).transpose();
    u_direct += s * s.transpose();
  }
  REQUIRE(max_abs(bundle.U - u_direct) < 1e-10);
  REQUIRE(bundle.n == 50);
  REQUIRE((bundle.eval_point - center).norm() == 0.0);
  REQUIRE(max_abs(bundle.H - der.hessian) == 0.0);
}

TEST_CASE("sandwich covariance matches the explicit-inverse route") {
  std::mt19937_64 rng(213);
  ModelSpec spec{3, 2};
  Dataset data = random_binary(60, 3, rng);
  for (int r = 0; r < 20; ++r) data.values(r, r % 3) = 2;  // populate category 2
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  CurvatureBundle bundle = curvature_bundle(data, spec, center, prior);
  Matrix sigma = ghw_covariance(bundle);

  Matrix neg_h_inv = Matrix(-bundle.H).inverse();
  Matrix want = neg_h_inv * bundle.U * neg_h_inv;
  REQUIRE(max_abs(sigma - want) / max_abs(want) < 1e-9);
  REQUIRE(max_abs(sigma - sigma.transpose()) == 0.0);
}

TEST_CASE("robust covariance: prior-corrected inverse sandwich") {
  std::mt19937_64 rng(217);
  ModelSpec spec{3, 1};
  Dataset data = random_binary(70, 3, rng);
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  CurvatureBundle bundle = curvature_bundle(data, spec, center, prior);

  Matrix got = robust_posterior_covariance(bundle);
  Matrix sigma_ghw = ghw_covariance(bundle);
  Matrix precision = sigma_ghw.inverse();
  precision.diagonal() -= bundle.H_theta_diag;
  Matrix want = precision.inverse();
  REQUIRE(max_abs(got - want) / max_abs(want) < 1e-8);

  // flat-prior limit: the correction disappears
  PriorSpec flat{1e8, 1e8};
  CurvatureBundle flat_bundle = curvature_bundle(data, spec, center, flat);
  Matrix flat_cov = robust_posterior_covariance(flat_bundle);
  Matrix flat_ghw = ghw_covariance(flat_bundle);
  REQUIRE(max_abs(flat_cov - flat_ghw) / max_abs(flat_ghw) < 1e-6);
}

TEST_CASE("rescaling factors satisfy the defining identities") {
  std::mt19937_64 rng(219);
  ModelSpec spec{4, 1};
  Dataset data = random_binary(90, 4, rng);
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  RescalingMatrix r = build_rescaling(data, spec, center, prior, RescalingVariant::GHW);
  const int d = spec.dim();

  REQUIRE(max_abs(r.A - r.Gamma * r.L.transpose()) == 0.0);
  REQUIRE(max_abs(r.A * r.A_inv - Matrix::Identity(d, d)) < 1e-10);
  REQUIRE(max_abs(r.A_inv * r.A - Matrix::Identity(d, d)) < 1e-10);

  // pushing the pseudo covariance through A lands exactly on Gamma Gamma'
  CurvatureBundle bundle = curvature_bundle(data, spec, center, prior);
  Matrix pseudo_precision = -bundle.H;
  pseudo_precision.diagonal() -= bundle.H_theta_diag;
  Matrix sigma_pseudo = pd_inverse(pseudo_precision, "test");
  REQUIRE(max_abs(r.A * sigma_pseudo * r.A.transpose() - r.Gamma * r.Gamma.transpose()) < 1e-10);

  // map round trip
  Vector theta(d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < d; ++k) theta[k] = center[k] + 0.3 * normal(rng);
  REQUIRE((r.to_theta(r.to_beta(theta)) - theta).lpNorm<Eigen::Infinity>() < 1e-11);
  // the center is the fixed point
  REQUIRE((r.to_beta(center) - center).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("build and mid-run update agree exactly at the same point") {
  std::mt19937_64 rng(223);
  ModelSpec spec{3, 1};
  Dataset data = random_binary(45, 3, rng);
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  RescalingMatrix a = build_rescaling(data, spec, center, prior, RescalingVariant::GHW);
  RescalingMatrix b = update_rescaling(center, data, spec, prior);
  REQUIRE(max_abs(a.A - b.A) == 0.0);
  REQUIRE(max_abs(a.A_inv - b.A_inv) == 0.0);
  REQUIRE(max_abs(a.L - b.L) == 0.0);
  REQUIRE(max_abs(a.Gamma - b.Gamma) == 0.0);
}

TEST_CASE("identity rescaling forwards untouched") {
  Vector center(3);
  center << 0.5, -1.0, 2.0;
  RescalingMatrix id = RescalingMatrix::identity_at(center);
  REQUIRE(id.identity);
  Vector x(3);
  x << 1.0, 2.0, 3.0;
  REQUIRE((id.to_beta(x) - x).norm() == 0.0);
  REQUIRE((id.to_theta(x) - x).norm() == 0.0);
}

TEST_CASE("monte carlo variants produce usable factors") {
  std::mt19937_64 rng(227);
  ModelSpec spec{2, 1};
  Dataset data = random_binary(80, 2, rng);
  PriorSpec prior;
  Vector center = map_pseudo(data, spec, prior).theta_star;
  BuildRescalingOptions opts;
  opts.mc_samples = 400;
  opts.sweeps = 20;
  opts.seed = 3;
  for (RescalingVariant v : {RescalingVariant::RM, RescalingVariant::MCH}) {
    RescalingMatrix r = build_rescaling(data, spec, center, prior, v, opts);
    REQUIRE(r.variant == v);
    REQUIRE(max_abs(r.A * r.A_inv - Matrix::Identity(spec.dim(), spec.dim())) < 1e-10);
    REQUIRE(r.warnings.empty());
  }
}

TEST_CASE("post-hoc calibration applies the affine map rowwise") {
  std::mt19937_64 rng(229);
  const int d = 3;
  Matrix L = cholesky_lower(random_spd(d, rng), "test");
  Matrix Gamma = cholesky_lower(random_spd(d, rng), "test");
  Vector center(d);
  center << 1.0, -2.0, 0.5;
  Matrix draws(5, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < d; ++c) draws(r, c) = normal(rng);
  }
  Matrix out = post_hoc_calibrate(draws, center, L, Gamma);
  Matrix map = Gamma * L.transpose();
  for (int r = 0; r < 5; ++r) {
    Vector want = map * (draws.row(r).transpose() - center) + center;
    REQUIRE((out.row(r).transpose() - want).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  REQUIRE_THROWS_AS(post_hoc_calibrate(draws, Vector::Zero(d + 1), L, Gamma), ValidationError);
}

TEST_CASE("calibration moves sample covariance onto the target") {
  std::mt19937_64 rng(233);
  const int d = 3;
  Matrix pseudo_cov = random_spd(d, rng);
  Matrix target_cov = random_spd(d, rng);
  Matrix L = cholesky_lower(pseudo_cov.inverse(), "test");  // L L' = pseudo precision
  Matrix Gamma = cholesky_lower(target_cov, "test");
  Vector center = Vector::Zero(d);

  // synthetic pseudo-posterior draws with covariance pseudo_cov
  const int n = 20000;
  Matrix chol_pseudo = cholesky_lower(pseudo_cov, "test");
  Matrix draws(n, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(d);
  for (int r = 0; r < n; ++r) {
    for (int k = 0; k < d; ++k) z[k] = normal(rng);
    draws.row(r) = (chol_pseudo * z).transpose();
  }
  Matrix out = post_hoc_calibrate(draws, center, L, Gamma);
  Vector mean = out.colwise().mean().transpose();
  Matrix centered = out.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / double(n - 1);
  REQUIRE(max_abs(cov - Gamma * Gamma.transpose()) / max_abs(target_cov) < 0.08);
}
