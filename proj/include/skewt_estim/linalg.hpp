#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "skewt_estim/errors.hpp"

namespace skewt_estim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Cholesky factorization of a symmetric positive-definite matrix. When the
/// plain factorization fails, retries with 1e-12 and then 1e-9 times
/// trace(m) added to the diagonal before giving up.
inline Eigen::LLT<Matrix> spd_factor(const Matrix& m, const std::string& what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  const double tr = m.trace();
  for (double jitter : {1e-12, 1e-9}) {
    Matrix shifted = m;
    shifted.diagonal().array() += jitter * std::abs(tr);
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw NumericalFailure(what + " is not positive definite", min_eigenvalue(m));
}

/// Square-root factor L with L L^T = cov, valid for singular PSD matrices.
inline Matrix psd_sqrt(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(cov));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

inline Matrix block_diag(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

// Standard normal helpers.
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double log_normal_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace skewt_estim
