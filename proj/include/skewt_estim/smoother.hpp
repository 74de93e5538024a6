#pragma once

// Skew-t smoother: outer variational Bayes loop over (forward augmented
// filtering with truncation, Rauch-Tung-Striebel backward pass on the
// augmented state, Lambda update for every step).

#include <algorithm>
#include <exception>
#include <span>
#include <vector>

#include "skewt_estim/filter.hpp"
#include "skewt_estim/model.hpp"

namespace skewt_estim {

struct SmootherIterate {
  std::vector<AugmentedBelief> filtered;
  /// predicted[k] is the x-prediction used at step k (predicted[0] is the prior).
  std::vector<GaussianBelief> predicted;
  std::vector<AugmentedBelief> smoothed;
  std::vector<Vector> lambda;
};

struct ForwardResult {
  std::vector<AugmentedBelief> filtered;
  std::vector<GaussianBelief> predicted;
};

inline ForwardResult forward_pass(const StateSpaceModel& model, std::span<const Vector> ys,
                                  std::span<const Vector> lambda,
                                  const TruncationOrderPolicy& policy = order::Optimal{},
                                  std::span<const Matrix> cs = {}) {
  if (lambda.size() != ys.size())
    throw InvalidArgument("forward_pass: need one Lambda vector per measurement");
  for (const auto& l : lambda)
    if (l.size() != model.ny() || (l.array() <= 0.0).any())
      throw InvalidArgument("forward_pass: Lambda entries must be positive");

  ForwardResult out;
  out.filtered.reserve(ys.size());
  out.predicted.reserve(ys.size());
  GaussianBelief prior{model.prior_mean, model.prior_cov};
  for (std::size_t k = 0; k < ys.size(); ++k) {
    try {
      out.predicted.push_back(prior);
      out.filtered.push_back(augmented_update(model, detail::measurement_matrix(model, cs, k),
                                              prior, ys[k], lambda[k], policy));
      prior = predict(model, x_marginal(out.filtered.back(), model.nx()));
    } catch (const Error& e) {
      std::throw_with_nested(StepError(e.what(), k));
    }
  }
  return out;
}

/// Backward recursion on z = [x; u] with transition blockdiag(A, 0). The gain
/// G_k = Z_{k|k} A_z^T Zp^{-1} has zero u-columns, so only the x-block
/// P_{k+1|k} = A P_{k|k} A^T + Q of the predicted covariance enters.
inline std::vector<AugmentedBelief> backward_pass(std::span<const AugmentedBelief> filtered,
                                                  std::span<const GaussianBelief> predicted,
                                                  const StateSpaceModel& model) {
  if (filtered.size() != predicted.size())
    throw InvalidArgument("backward_pass: filtered and predicted sequences differ in length");
  std::vector<AugmentedBelief> smoothed(filtered.begin(), filtered.end());
  if (smoothed.empty()) return smoothed;
  const Eigen::Index nx = model.nx();

  for (std::size_t k = smoothed.size() - 1; k-- > 0;) {
    const AugmentedBelief& f = filtered[k];
    const GaussianBelief& next_pred = predicted[k + 1];
    const AugmentedBelief& next_smooth = smoothed[k + 1];

    const auto llt = spd_factor(next_pred.cov, "predicted covariance in backward pass");
    // G = Z_{k|k}[:, x] A^T P_{k+1|k}^{-1}
    const Matrix gain = llt.solve(model.A * f.cov.leftCols(nx).transpose()).transpose();

    AugmentedBelief s;
    s.mean = f.mean + gain * (next_smooth.mean.head(nx) - model.A * f.mean.head(nx));
    s.cov = f.cov +
            gain * (next_smooth.cov.topLeftCorner(nx, nx) - next_pred.cov) * gain.transpose();
    symmetrize(s.cov);
    smoothed[k] = std::move(s);
  }
  return smoothed;
}

inline Vector update_lambda(const AugmentedBelief& smoothed, const Vector& y,
                            const StateSpaceModel& model, const Matrix& C) {
  if (smoothed.size() != model.nx() + model.ny())
    throw InvalidArgument("update_lambda: belief must have dimension nx + ny");
  if (y.size() != model.ny()) throw InvalidArgument("update_lambda: measurement has wrong length");
  return lambda_from_psi(model.nu, psi_diagonal(model, C, smoothed, y));
}

inline Vector update_lambda(const AugmentedBelief& smoothed, const Vector& y,
                            const StateSpaceModel& model) {
  return update_lambda(smoothed, y, model, model.C);
}

struct SmootherOutput {
  std::vector<GaussianBelief> states;
  SmootherIterate iterate;
  std::size_t iterations = 0;
  bool converged = false;
};

inline SmootherOutput sts_run(const StateSpaceModel& model, std::span<const Vector> ys,
                              const VBConfig& cfg = {}, std::span<const Matrix> cs = {}) {
  model.validate();
  cfg.validate();
  detail::check_measurements(model, ys, cs);
  const std::size_t steps = ys.size();
  const Eigen::Index nx = model.nx();

  SmootherOutput out;
  if (steps == 0) {
    out.converged = true;
    return out;
  }

  std::vector<Vector> lambda(steps, Vector::Ones(model.ny()));
  // Reference for the first convergence check: the prior propagated forward.
  std::vector<Vector> previous(steps);
  previous[0] = model.prior_mean;
  for (std::size_t k = 1; k < steps; ++k) previous[k] = model.A * previous[k - 1];

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    try {
      auto fwd = forward_pass(model, ys, lambda, cfg.truncation, cs);
      auto smoothed = backward_pass(fwd.filtered, fwd.predicted, model);
      for (std::size_t k = 0; k < steps; ++k)
        lambda[k] = update_lambda(smoothed[k], ys[k], model, detail::measurement_matrix(model, cs, k));

      double change = 0.0;
      for (std::size_t k = 0; k < steps; ++k) {
        const Vector x = smoothed[k].mean.head(nx);
        change = std::max(change, (x - previous[k]).norm());
        previous[k] = x;
      }
      out.iterations = it;
      out.iterate = {std::move(fwd.filtered), std::move(fwd.predicted), std::move(smoothed), lambda};
      if (change < cfg.tol) {
        out.converged = true;
        break;
      }
    } catch (const StepError& e) {
      std::throw_with_nested(StepError(e.what(), e.step(), it));
    }
  }

  out.states.reserve(steps);
  for (const auto& z : out.iterate.smoothed) out.states.push_back(x_marginal(z, nx));
  return out;
}

}  // namespace skewt_estim
