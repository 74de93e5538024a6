#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "skewt_estim/errors.hpp"
#include "skewt_estim/linalg.hpp"

namespace skewt_estim::bench {

/// Root-mean-square over k of the position error norm (first three state
/// components). `truth` holds one state per row.
inline double rmse(std::span<const Vector> estimates, const Matrix& truth) {
  if (estimates.size() != static_cast<std::size_t>(truth.rows()))
    throw InvalidArgument("rmse: estimate and truth lengths differ");
  if (estimates.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const Vector err = estimates[k].head(3) - truth.row(static_cast<Eigen::Index>(k)).head(3).transpose();
    sum += err.squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(estimates.size()));
}

/// Normalized estimation error squared of the position block per step.
inline std::vector<double> nees(std::span<const Vector> estimates, std::span<const Matrix> covs,
                                const Matrix& truth) {
  if (estimates.size() != covs.size() || estimates.size() != static_cast<std::size_t>(truth.rows()))
    throw InvalidArgument("nees: sequence lengths differ");
  std::vector<double> out;
  out.reserve(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const Vector err = estimates[k].head(3) - truth.row(static_cast<Eigen::Index>(k)).head(3).transpose();
    const Eigen::LLT<Matrix> llt(covs[k].topLeftCorner(3, 3));
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("nees: position covariance not invertible",
                             min_eigenvalue(covs[k].topLeftCorner(3, 3)));
    out.push_back(err.dot(llt.solve(err)));
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace skewt_estim::bench
