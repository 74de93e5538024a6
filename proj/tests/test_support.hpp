#pragma once

// Helpers shared by the unit tests and the acceptance binary: random
// problem generators and textbook Kalman/RTS implementations used as
// reference values.

#include <Eigen/Dense>

#include <random>
#include <vector>

#include "skewt_estim/model.hpp"
#include "skewt_estim/truncnorm.hpp"

namespace testing_support {

using skewt_estim::Matrix;
using skewt_estim::Vector;

inline Matrix random_spd(int n, std::mt19937_64& rng, double ridge = 0.1) {
  std::normal_distribution<double> gauss;
  Matrix w(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) w(i, j) = gauss(rng);
  Matrix s = w * w.transpose() / n + ridge * Matrix::Identity(n, n);
  return 0.5 * (s + s.transpose());
}

inline skewt_estim::MomentPair random_moments(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  skewt_estim::MomentPair m;
  m.cov = random_spd(n, rng);
  m.mean.resize(n);
  for (int i = 0; i < n; ++i) m.mean(i) = 1.5 * gauss(rng) * std::sqrt(m.cov(i, i));
  return m;
}

inline skewt_estim::StateSpaceModel random_linear_model(int nx, int ny, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  skewt_estim::StateSpaceModel m;
  m.A = Matrix::Identity(nx, nx);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) m.A(i, j) += 0.1 * gauss(rng);
  m.Q = 0.1 * random_spd(nx, rng);
  m.C.resize(ny, nx);
  for (int i = 0; i < ny; ++i)
    for (int j = 0; j < nx; ++j) m.C(i, j) = gauss(rng);
  m.R = Vector::Constant(ny, 0.5);
  for (int i = 0; i < ny; ++i) m.R(i) += std::abs(gauss(rng));
  m.Delta = Vector::Constant(ny, 1.0);
  m.nu = Vector::Constant(ny, 4.0);
  m.prior_mean = Vector::Zero(nx);
  m.prior_cov = random_spd(nx, rng, 0.5);
  return m;
}

/// Measurements from the model with Gaussian noise of variance R.
inline std::vector<Vector> simulate_linear(const skewt_estim::StateSpaceModel& m, int steps,
                                           std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  const Eigen::LLT<Matrix> q_chol(m.Q), p_chol(m.prior_cov);
  auto draw = [&](const Eigen::LLT<Matrix>& chol, Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = gauss(rng);
    return Vector(chol.matrixL() * z);
  };
  std::vector<Vector> ys;
  Vector x = m.prior_mean + draw(p_chol, m.nx());
  for (int k = 0; k < steps; ++k) {
    if (k > 0) x = m.A * x + draw(q_chol, m.nx());
    Vector y = m.C * x;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += std::sqrt(m.R(i)) * gauss(rng);
    ys.push_back(y);
  }
  return ys;
}

struct KalmanRun {
  std::vector<skewt_estim::GaussianBelief> filtered;
  std::vector<skewt_estim::GaussianBelief> predicted;
};

/// Batch-form Kalman filter with Joseph covariance update.
inline KalmanRun kalman_filter(const skewt_estim::StateSpaceModel& m, const std::vector<Vector>& ys,
                               const Vector* r_override = nullptr) {
  KalmanRun run;
  const Matrix R = (r_override ? *r_override : m.R).asDiagonal();
  Vector x = m.prior_mean;
  Matrix P = m.prior_cov;
  const auto n = m.nx();
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (k > 0) {
      x = m.A * x;
      P = m.A * P * m.A.transpose() + m.Q;
    }
    run.predicted.push_back({x, P});
    const Matrix S = m.C * P * m.C.transpose() + R;
    const Matrix K = P * m.C.transpose() * S.inverse();
    x = x + K * (ys[k] - m.C * x);
    const Matrix I_KC = Matrix::Identity(n, n) - K * m.C;
    P = I_KC * P * I_KC.transpose() + K * R * K.transpose();
    run.filtered.push_back({x, P});
  }
  return run;
}

inline std::vector<skewt_estim::GaussianBelief> rts_smoother(const skewt_estim::StateSpaceModel& m,
                                                             const KalmanRun& kf) {
  auto out = kf.filtered;
  for (std::size_t k = out.size(); k-- > 1;) {
    const auto& f = kf.filtered[k - 1];
    const auto& p = kf.predicted[k];
    const Matrix G = f.cov * m.A.transpose() * p.cov.inverse();
    out[k - 1].mean = f.mean + G * (out[k].mean - p.mean);
    out[k - 1].cov = f.cov + G * (out[k].cov - p.cov) * G.transpose();
  }
  return out;
}

}  // namespace testing_support
