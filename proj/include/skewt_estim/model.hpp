#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "skewt_estim/errors.hpp"
#include "skewt_estim/linalg.hpp"
#include "skewt_estim/skewt.hpp"
#include "skewt_estim/truncnorm.hpp"

namespace skewt_estim {

/// x_{k+1} = A x_k + w_k,  w_k ~ N(0, Q),  x_1 ~ N(prior_mean, prior_cov)
/// y_k = C x_k + e_k,  [e_k]_i ~ ST(0, R_i, Delta_i, nu_i)
/// R, Delta and nu hold the diagonals.
struct StateSpaceModel {
  Matrix A;
  Matrix Q;
  Matrix C;
  Vector R;
  Vector Delta;
  Vector nu;
  Vector prior_mean;
  Matrix prior_cov;

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index ny() const { return C.rows(); }

  void validate() const {
    const auto n = nx();
    const auto m = ny();
    if (A.cols() != n || Q.rows() != n || Q.cols() != n || C.cols() != n ||
        prior_mean.size() != n || prior_cov.rows() != n || prior_cov.cols() != n)
      throw InvalidArgument("state-space model: inconsistent state dimensions");
    if (R.size() != m || Delta.size() != m || nu.size() != m)
      throw InvalidArgument("state-space model: inconsistent measurement dimensions");
    if ((R.array() <= 0.0).any()) throw InvalidArgument("state-space model: R must be positive");
    if ((nu.array() <= 0.0).any()) throw InvalidArgument("state-space model: nu must be positive");
  }

  NoiseModel noise() const {
    NoiseModel out;
    for (Eigen::Index i = 0; i < ny(); ++i) out.components.push_back({R(i), Delta(i), nu(i)});
    return out;
  }
};

struct GaussianBelief {
  Vector mean;
  Matrix cov;
};

/// Joint normal approximation over [x; u].
using AugmentedBelief = MomentPair;

struct VBConfig {
  std::size_t max_iterations = 30;
  /// Stop when the Euclidean change of the state mean falls below tol.
  double tol = 1e-4;
  TruncationOrderPolicy truncation = order::Optimal{};

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("VB config: max_iterations must be >= 1");
    if (!(tol > 0.0)) throw InvalidArgument("VB config: tol must be positive");
  }
};

struct VBStepDiagnostics {
  std::size_t iterations = 0;
  Vector lambda_diag;
  Vector psi_diag;
  Vector u_mean;
  Matrix u_cov;
  bool converged = false;
};

inline GaussianBelief predict(const StateSpaceModel& model, const GaussianBelief& b) {
  GaussianBelief out;
  out.mean = model.A * b.mean;
  out.cov = model.A * b.cov * model.A.transpose() + model.Q;
  symmetrize(out.cov);
  return out;
}

inline GaussianBelief x_marginal(const AugmentedBelief& z, Eigen::Index nx) {
  return {z.mean.head(nx), z.cov.topLeftCorner(nx, nx)};
}

namespace detail {

/// Per-step measurement matrices: empty span means model.C at every step.
inline const Matrix& measurement_matrix(const StateSpaceModel& model,
                                        std::span<const Matrix> cs, std::size_t k) {
  if (cs.empty()) return model.C;
  if (k >= cs.size()) throw InvalidArgument("fewer measurement matrices than measurements");
  return cs[k];
}

inline void check_measurements(const StateSpaceModel& model, std::span<const Vector> ys,
                               std::span<const Matrix> cs) {
  if (!cs.empty() && cs.size() != ys.size())
    throw InvalidArgument("measurement matrix count does not match measurement count");
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (ys[k].size() != model.ny())
      throw InvalidArgument("measurement " + std::to_string(k) + " has wrong length");
    if (!cs.empty() && (cs[k].rows() != model.ny() || cs[k].cols() != model.nx()))
      throw InvalidArgument("measurement matrix " + std::to_string(k) + " has wrong shape");
  }
}

}  // namespace detail

}  // namespace skewt_estim
