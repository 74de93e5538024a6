#pragma once

// Skew-t filter: per-step variational Bayes alternating the joint (x, u)
// update, approximated through recursive truncation of u to the positive
// orthant, and the update of the Gamma mixing precisions Lambda.

#include <exception>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "skewt_estim/model.hpp"
#include "skewt_estim/truncnorm.hpp"

namespace skewt_estim {

/// Joint normal update of [x; u] for fixed Lambda, followed by recursive
/// truncation of the u-block. Shared by the filter and the smoother's forward
/// pass.
inline AugmentedBelief augmented_update(const StateSpaceModel& model, const Matrix& C,
                                        const GaussianBelief& prior, const Vector& y,
                                        const Vector& lambda,
                                        const TruncationOrderPolicy& policy = order::Optimal{}) {
  const Eigen::Index nx = model.nx();
  const Eigen::Index ny = model.ny();
  const Vector inv_lambda = lambda.cwiseInverse();

  Matrix z_prior = block_diag(prior.cov, inv_lambda.asDiagonal().toDenseMatrix());
  Matrix cz(ny, nx + ny);
  cz << C, model.Delta.asDiagonal().toDenseMatrix();

  const Matrix cz_z = cz * z_prior;  // C_z Z_{k|k-1}
  Matrix s = cz_z * cz.transpose();
  s.diagonal() += inv_lambda.cwiseProduct(model.R);
  symmetrize(s);

  const auto llt = spd_factor(s, "innovation covariance");
  const Matrix gain = llt.solve(cz_z).transpose();  // Z C_z^T S^{-1}

  AugmentedBelief pre;
  pre.mean = Vector::Zero(nx + ny);
  pre.mean.head(nx) = prior.mean;
  pre.mean += gain * (y - C * prior.mean);
  pre.cov = z_prior - gain * cz_z;
  symmetrize(pre.cov);

  IndexSet u_block(static_cast<std::size_t>(ny));
  std::iota(u_block.begin(), u_block.end(), static_cast<std::size_t>(nx));
  return rec_trunc(pre, u_block, policy);
}

/// Diagonal of Psi_k, the sufficient statistic of the Lambda update.
inline Vector psi_diagonal(const StateSpaceModel& model, const Matrix& C,
                           const AugmentedBelief& z, const Vector& y) {
  const Eigen::Index nx = model.nx();
  const Eigen::Index ny = model.ny();
  Matrix cz(ny, nx + ny);
  cz << C, model.Delta.asDiagonal().toDenseMatrix();

  const Vector residual = y - cz * z.mean;
  const Vector spread = (cz * z.cov * cz.transpose()).diagonal();
  const Vector u = z.mean.tail(ny);
  const Vector u_var = z.cov.bottomRightCorner(ny, ny).diagonal();
  return (residual.cwiseAbs2() + spread).cwiseQuotient(model.R) + u.cwiseAbs2() + u_var;
}

/// E[Lambda_ii] = (nu_i + 2) / (nu_i + Psi_ii).
inline Vector lambda_from_psi(const Vector& nu, const Vector& psi) {
  return (nu.array() + 2.0) / (nu.array() + psi.array());
}

inline std::pair<GaussianBelief, VBStepDiagnostics> stf_update(const StateSpaceModel& model,
                                                               const Matrix& C,
                                                               const GaussianBelief& prior,
                                                               const Vector& y,
                                                               const VBConfig& cfg) {
  cfg.validate();
  const Eigen::Index nx = model.nx();
  const Eigen::Index ny = model.ny();
  if (y.size() != ny) throw InvalidArgument("stf_update: measurement has wrong length");
  if (prior.mean.size() != nx || prior.cov.rows() != nx)
    throw InvalidArgument("stf_update: prior has wrong dimension");

  VBStepDiagnostics diag;
  Vector lambda = Vector::Ones(ny);
  Vector previous = prior.mean;
  AugmentedBelief z;

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    z = augmented_update(model, C, prior, y, lambda, cfg.truncation);
    diag.psi_diag = psi_diagonal(model, C, z, y);
    lambda = lambda_from_psi(model.nu, diag.psi_diag);
    diag.iterations = it;

    const Vector x = z.mean.head(nx);
    const double change = (x - previous).norm();
    previous = x;
    if (change < cfg.tol) {
      diag.converged = true;
      break;
    }
  }

  diag.lambda_diag = lambda;
  diag.u_mean = z.mean.tail(ny);
  diag.u_cov = z.cov.bottomRightCorner(ny, ny);
  return {x_marginal(z, nx), std::move(diag)};
}

inline std::pair<GaussianBelief, VBStepDiagnostics> stf_update(const StateSpaceModel& model,
                                                               const GaussianBelief& prior,
                                                               const Vector& y,
                                                               const VBConfig& cfg = {}) {
  return stf_update(model, model.C, prior, y, cfg);
}

struct FilterStep {
  GaussianBelief belief;
  VBStepDiagnostics diagnostics;
};

/// Runs the filter over ys starting from the model prior. `cs` optionally
/// gives a measurement matrix per step (for relinearized models).
inline std::vector<FilterStep> stf_run(const StateSpaceModel& model, std::span<const Vector> ys,
                                       const VBConfig& cfg = {}, std::span<const Matrix> cs = {}) {
  model.validate();
  detail::check_measurements(model, ys, cs);
  std::vector<FilterStep> out;
  out.reserve(ys.size());
  GaussianBelief prior{model.prior_mean, model.prior_cov};
  for (std::size_t k = 0; k < ys.size(); ++k) {
    try {
      auto [post, diag] = stf_update(model, detail::measurement_matrix(model, cs, k), prior, ys[k], cfg);
      prior = predict(model, post);
      out.push_back({std::move(post), std::move(diag)});
    } catch (const Error& e) {
      std::throw_with_nested(StepError(e.what(), k));
    }
  }
  return out;
}

}  // namespace skewt_estim
