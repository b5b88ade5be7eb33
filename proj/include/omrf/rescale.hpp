#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "omrf/estimate.hpp"
#include "omrf/model.hpp"

namespace omrf {

// Lower Cholesky factor with a diagonal jitter ladder (1e-10 .. 1e-6) as a
// rescue for matrices that are PD up to roundoff. Throws NumericalError with
// the smallest eigenvalue when even the largest jitter fails.
inline Matrix cholesky_lower(const Matrix& M, const std::string& label) {
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-10; jitter <= 1.000001e-6; jitter *= 10.0) {
    Matrix J = M;
    J.diagonal().array() += jitter;
    llt.compute(J);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  double min_eig = es.eigenvalues().minCoeff();
  throw NumericalError(label + " is not positive definite (smallest eigenvalue " +
                       std::to_string(min_eig) + ")");
}

// Symmetric inverse of a PD matrix via its Cholesky factorization.
inline Matrix pd_inverse(const Matrix& M, const std::string& label) {
  Matrix L = cholesky_lower(M, label);
  Matrix l_inv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(M.rows(), M.cols()));
  Matrix inv = l_inv.transpose() * l_inv;
  // the solve path keeps symmetry only up to roundoff
  return 0.5 * (inv + inv.transpose());
}

// Everything needed to correct pseudo-posterior curvature at a point:
// H       Hessian of the pseudo log likelihood (prior excluded),
// U       sum of per-observation score outer products,
// H_theta prior curvature diagonal (negative),
// all evaluated at eval_point.
struct CurvatureBundle {
  Matrix H;
  Matrix U;
  Vector H_theta_diag;
  Vector eval_point;
  int n = 0;
};

inline CurvatureBundle curvature_bundle(const Dataset& data, const ModelSpec& spec,
                                        const Vector& theta_eval, const PriorSpec& prior) {
  validate(data, spec);
  validate_theta(theta_eval, spec);
  PseudoDerivatives der = pseudo_score_and_curvature(data, spec, theta_eval);
  CurvatureBundle out;
  out.H = std::move(der.hessian);
  out.U = der.scores.transpose() * der.scores;
  out.H_theta_diag = prior_eval(theta_eval, spec, prior).curvature_diag;
  out.eval_point = theta_eval;
  out.n = data.n();
  return out;
}

// Godambe sandwich covariance (-H)^-1 U (-H)^-1, computed with two linear
// solves against -H rather than an explicit inverse.
inline Matrix ghw_covariance(const CurvatureBundle& bundle) {
  Matrix neg_h = -bundle.H;
  Eigen::LLT<Matrix> llt(neg_h);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(neg_h);
    throw NumericalError("pseudo curvature -H is not positive definite (smallest eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  Matrix cov = llt.solve(llt.solve(bundle.U).transpose());
  return 0.5 * (cov + cov.transpose());
}

// Prior-corrected target covariance (Sigma_GHW^-1 - H_theta)^-1. The inverse
// sandwich is assembled as (-H) U^-1 (-H) from one solve against U, so this
// path and the mid-run update path are the same code.
inline Matrix robust_posterior_covariance(const CurvatureBundle& bundle) {
  Matrix neg_h = -bundle.H;
  Eigen::LDLT<Matrix> u_ldlt(bundle.U);
  if (u_ldlt.info() != Eigen::Success || !u_ldlt.isPositive()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(bundle.U);
    throw NumericalError("score outer-product matrix U is not positive definite "
                         "(smallest eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  Matrix z = u_ldlt.solve(neg_h);
  Matrix precision = neg_h * z;
  precision.diagonal() -= bundle.H_theta_diag;  // H_theta_diag is negative
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(precision);
    throw NumericalError("corrected posterior precision is indefinite (smallest eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  Matrix cov = llt.solve(Matrix::Identity(precision.rows(), precision.cols()));
  return 0.5 * (cov + cov.transpose());
}

enum class RescalingVariant { GHW, RM, MCH };

inline std::string to_string(RescalingVariant v) {
  switch (v) {
    case RescalingVariant::GHW: return "ghw";
    case RescalingVariant::RM: return "rm";
    default: return "mch";
  }
}

// Affine map beta = A (theta - theta_star) + theta_star with A = Gamma L',
// where L L' factors the pseudo-posterior precision and Gamma Gamma' the
// corrected target covariance. Pushing pseudo-posterior draws through the
// map gives them the corrected covariance while keeping the center fixed.
struct RescalingMatrix {
  Vector theta_star;
  Matrix L;       // lower, L L' = -(H + H_theta)
  Matrix Gamma;   // lower, Gamma Gamma' = target covariance
  Matrix A;       // Gamma L'
  Matrix A_inv;   // L^-T Gamma^-1
  RescalingVariant variant = RescalingVariant::GHW;
  bool identity = false;
  std::vector<std::string> warnings;

  static RescalingMatrix identity_at(const Vector& theta_star) {
    RescalingMatrix r;
    const auto d = theta_star.size();
    r.theta_star = theta_star;
    r.L = Matrix::Identity(d, d);
    r.Gamma = Matrix::Identity(d, d);
    r.A = Matrix::Identity(d, d);
    r.A_inv = Matrix::Identity(d, d);
    r.identity = true;
    return r;
  }

  Vector to_beta(const Vector& theta) const {
    if (identity) return theta;
    return A * (theta - theta_star) + theta_star;
  }

  Vector to_theta(const Vector& beta) const {
    if (identity) return beta;
    return A_inv * (beta - theta_star) + theta_star;
  }
};

namespace detail {

// Shared by build_rescaling(GHW) and the mid-run update so the two agree
// exactly: factors via the triangular-solve route of the update algorithm.
inline RescalingMatrix rescaling_ghw_at(const Vector& center, const Dataset& data,
                                        const ModelSpec& spec, const PriorSpec& prior) {
  CurvatureBundle bundle = curvature_bundle(data, spec, center, prior);
  Matrix pseudo_precision = -bundle.H;
  pseudo_precision.diagonal() -= bundle.H_theta_diag;
  RescalingMatrix out;
  out.theta_star = center;
  out.variant = RescalingVariant::GHW;
  out.L = cholesky_lower(pseudo_precision, "pseudo posterior precision");
  Matrix target = robust_posterior_covariance(bundle);
  out.Gamma = cholesky_lower(target, "corrected posterior covariance");
  out.A = out.Gamma * out.L.transpose();
  const auto d = out.A.rows();
  // A^-1 = L^-T Gamma^-1 from two triangular solves
  Matrix l_inv_t = out.L.transpose()
                       .triangularView<Eigen::Upper>()
                       .solve(Matrix::Identity(d, d));
  Matrix gamma_inv = out.Gamma.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  out.A_inv = l_inv_t * gamma_inv;
  return out;
}

}  // namespace detail

struct BuildRescalingOptions {
  int mc_samples = 2000;  // for the RM / MCH variants
  int sweeps = 100;
  std::uint64_t seed = 1;
};

// Builds the affine correction at theta_star. GHW derives the target
// covariance from the sandwich estimator; RM and MCH from a Monte Carlo
// Hessian at theta_star (for RM the caller passes the Robbins-Monro optimum).
inline RescalingMatrix build_rescaling(const Dataset& data, const ModelSpec& spec,
                                       const Vector& theta_star, const PriorSpec& prior,
                                       RescalingVariant variant,
                                       const BuildRescalingOptions& opts = {}) {
  if (variant == RescalingVariant::GHW) {
    return detail::rescaling_ghw_at(theta_star, data, spec, prior);
  }
  CurvatureBundle bundle = curvature_bundle(data, spec, theta_star, prior);
  Matrix pseudo_precision = -bundle.H;
  pseudo_precision.diagonal() -= bundle.H_theta_diag;
  RescalingMatrix out;
  out.theta_star = theta_star;
  out.variant = variant;
  out.L = cholesky_lower(pseudo_precision, "pseudo posterior precision");
  MonteCarloHessian mch = monte_carlo_hessian(theta_star, spec, data.n(), opts.mc_samples,
                                              {opts.sweeps, opts.seed});
  out.warnings = mch.warnings;
  Matrix target_precision = -mch.value;
  target_precision.diagonal() -= bundle.H_theta_diag;
  target_precision = 0.5 * (target_precision + target_precision.transpose());
  Matrix target = pd_inverse(target_precision, "Monte Carlo posterior precision");
  out.Gamma = cholesky_lower(target, "corrected posterior covariance");
  out.A = out.Gamma * out.L.transpose();
  const auto d = out.A.rows();
  Matrix l_inv_t = out.L.transpose()
                       .triangularView<Eigen::Upper>()
                       .solve(Matrix::Identity(d, d));
  Matrix gamma_inv = out.Gamma.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  out.A_inv = l_inv_t * gamma_inv;
  return out;
}

// Mid-run rebuild at the running mean of the burn-in draws; identical math
// to build_rescaling with the GHW variant.
inline RescalingMatrix update_rescaling(const Vector& running_mean, const Dataset& data,
                                        const ModelSpec& spec, const PriorSpec& prior) {
  return detail::rescaling_ghw_at(running_mean, data, spec, prior);
}

// Applies theta_new = Gamma L' (theta - center) + center to every draw row.
inline Matrix post_hoc_calibrate(const Matrix& draws, const Vector& center, const Matrix& L,
                                 const Matrix& Gamma) {
  if (draws.cols() != center.size() || L.rows() != center.size() ||
      Gamma.rows() != center.size()) {
    throw ValidationError("post_hoc_calibrate: dimension mismatch between draws and factors");
  }
  Matrix map_t = L * Gamma.transpose();  // (Gamma L')'
  Matrix shifted = draws.rowwise() - center.transpose();
  Matrix out = shifted * map_t;
  out.rowwise() += center.transpose();
  return out;
}

}  // namespace omrf
