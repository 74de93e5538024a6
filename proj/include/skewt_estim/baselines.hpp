#pragma once

// Comparison estimators: Kalman filter and RTS smoother with per-component
// validation gating, and a bootstrap particle filter used as a reference.

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "skewt_estim/model.hpp"
#include "skewt_estim/skewt.hpp"

namespace skewt_estim {

struct GatingConfig {
  double gate_probability = 0.99;

  double threshold() const {
    if (!(gate_probability > 0.0 && gate_probability < 1.0))
      throw InvalidArgument("gate probability must lie in (0, 1)");
    return boost::math::quantile(boost::math::chi_squared(1.0), gate_probability);
  }
};

/// Sequential scalar Kalman updates in component order; a component whose
/// normalized innovation squared exceeds the chi-square(1) gate is skipped.
/// `r_diag` holds the (moment-matched) noise variances; the caller removes
/// any noise mean from y.
inline GaussianBelief kf_gated_update(const Matrix& C, const Vector& r_diag,
                                      const GaussianBelief& prior, const Vector& y,
                                      const GatingConfig& g = {},
                                      std::vector<bool>* rejected = nullptr) {
  if (C.rows() != y.size() || r_diag.size() != y.size() || C.cols() != prior.mean.size())
    throw InvalidArgument("kf_gated_update: dimension mismatch");
  const double gate = g.threshold();
  GaussianBelief post = prior;
  if (rejected) rejected->assign(static_cast<std::size_t>(y.size()), false);

  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const auto h = C.row(i);
    const Vector ph = post.cov * h.transpose();
    const double s = h.dot(ph) + r_diag(i);
    const double innovation = y(i) - h.dot(post.mean);
    if (innovation * innovation / s > gate) {
      if (rejected) (*rejected)[static_cast<std::size_t>(i)] = true;
      continue;
    }
    const Vector gain = ph / s;
    post.mean += gain * innovation;
    post.cov -= gain * ph.transpose();
    symmetrize(post.cov);
  }
  return post;
}

struct GatedRun {
  std::vector<GaussianBelief> filtered;
  std::vector<GaussianBelief> predicted;
  std::vector<GaussianBelief> smoothed;
};

/// Gated Kalman filter forward pass followed by the classical RTS backward
/// pass. Uses model.R as the Gaussian noise variances.
inline GatedRun rtss_gated_run(const StateSpaceModel& model, std::span<const Vector> ys,
                               const GatingConfig& g = {}, std::span<const Matrix> cs = {}) {
  model.validate();
  detail::check_measurements(model, ys, cs);
  GatedRun run;
  GaussianBelief prior{model.prior_mean, model.prior_cov};
  for (std::size_t k = 0; k < ys.size(); ++k) {
    run.predicted.push_back(prior);
    run.filtered.push_back(
        kf_gated_update(detail::measurement_matrix(model, cs, k), model.R, prior, ys[k], g));
    prior = predict(model, run.filtered.back());
  }

  run.smoothed = run.filtered;
  for (std::size_t k = ys.size(); k-- > 1;) {
    const auto& f = run.filtered[k - 1];
    const auto& p = run.predicted[k];
    const auto llt = spd_factor(p.cov, "predicted covariance in RTS pass");
    const Matrix gain = llt.solve(model.A * f.cov).transpose();
    auto& s = run.smoothed[k - 1];
    s.mean = f.mean + gain * (run.smoothed[k].mean - p.mean);
    s.cov = f.cov + gain * (run.smoothed[k].cov - p.cov) * gain.transpose();
    symmetrize(s.cov);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Bootstrap particle filter

struct ParticleCloud {
  Matrix states;  // n_particles x nx
  Vector weights;
};

struct ParticleEstimate {
  Vector mean;
  Matrix cov;
  double ess = 0.0;
  bool resampled = false;
};

struct PfOptions {
  /// Tabulate each skewed component's log density (cubic spline) over this
  /// many noise scales; exact evaluation outside.
  double table_span = 60.0;
  bool tabulate = true;
};

namespace detail {

inline void systematic_resample(ParticleCloud& cloud, std::mt19937_64& rng) {
  const auto n = cloud.weights.size();
  std::uniform_real_distribution<double> unif(0.0, 1.0 / static_cast<double>(n));
  const double start = unif(rng);
  Matrix resampled(cloud.states.rows(), cloud.states.cols());
  double cumulative = cloud.weights(0);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double point = start + static_cast<double>(i) / static_cast<double>(n);
    while (point > cumulative && j < n - 1) cumulative += cloud.weights(++j);
    resampled.row(i) = cloud.states.row(j);
  }
  cloud.states = std::move(resampled);
  cloud.weights.setConstant(1.0 / static_cast<double>(n));
}

class ComponentLogLik {
 public:
  ComponentLogLik(const NoiseModel& noise, const PfOptions& opt) : components_(noise.components) {
    for (const auto& c : noise.components) {
      tables_.push_back(opt.tabulate && c.shape != 0.0 ? shared_log_pdf_table(c, opt.table_span)
                                                       : nullptr);
      // Symmetric components: log_student_t(e) = offset - 0.5 (nu + 1) log1p(e^2 / (nu s2)).
      t_offsets_.push_back(c.shape == 0.0 ? log_student_t(0.0, c.spread_sq, c.dof) : 0.0);
    }
  }

  double operator()(std::size_t i, double e) const {
    if (tables_[i]) return (*tables_[i])(e);
    const auto& c = components_[i];
    if (c.shape != 0.0) return log_pdf(c, e);
    if (!std::isfinite(e)) throw InvalidArgument("skew-t log_pdf: non-finite argument");
    return t_offsets_[i] - 0.5 * (c.dof + 1.0) * std::log1p(e * e / (c.dof * c.spread_sq));
  }

 private:
  std::vector<SkewTComponent> components_;
  std::vector<std::shared_ptr<const LogPdfTable>> tables_;
  std::vector<double> t_offsets_;
};

}  // namespace detail

/// Bootstrap particle filter: proposal from the state dynamics, weights from
/// the skew-t residual likelihoods, systematic resampling when the effective
/// sample size drops below half the particle count.
inline std::vector<ParticleEstimate> pf_run(const StateSpaceModel& model,
                                            std::span<const Vector> ys, std::size_t n_particles,
                                            std::uint64_t seed, std::span<const Matrix> cs = {},
                                            const PfOptions& opt = {}) {
  model.validate();
  detail::check_measurements(model, ys, cs);
  if (n_particles < 100) throw InvalidArgument("pf_run: need at least 100 particles");
  std::vector<ParticleEstimate> out;
  if (ys.empty()) return out;

  const auto n = static_cast<Eigen::Index>(n_particles);
  const Eigen::Index nx = model.nx();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  auto gaussian_matrix = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
    return m;
  };

  const detail::ComponentLogLik loglik(model.noise(), opt);
  const Matrix q_root = psd_sqrt(model.Q);

  ParticleCloud cloud;
  cloud.states = (gaussian_matrix(n, nx) * psd_sqrt(model.prior_cov).transpose()).rowwise() +
                 model.prior_mean.transpose();
  cloud.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));

  Vector logw(n);
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (k > 0) {
      cloud.states = cloud.states * model.A.transpose() + gaussian_matrix(n, nx) * q_root.transpose();
    }
    const Matrix& C = detail::measurement_matrix(model, cs, k);
    const Matrix predicted_y = cloud.states * C.transpose();  // n x ny
    for (Eigen::Index p = 0; p < n; ++p) {
      double lw = std::log(cloud.weights(p));
      for (Eigen::Index i = 0; i < predicted_y.cols(); ++i)
        lw += loglik(static_cast<std::size_t>(i), ys[k](i) - predicted_y(p, i));
      logw(p) = lw;
    }
    const double max_lw = logw.maxCoeff();
    if (!std::isfinite(max_lw)) throw WeightDegeneracy(k);
    cloud.weights = (logw.array() - max_lw).exp();
    const double total = cloud.weights.sum();
    if (!(total > 0.0) || !std::isfinite(total)) throw WeightDegeneracy(k);
    cloud.weights /= total;

    ParticleEstimate est;
    est.mean = cloud.states.transpose() * cloud.weights;
    const Matrix centered = cloud.states.rowwise() - est.mean.transpose();
    est.cov = centered.transpose() * cloud.weights.asDiagonal() * centered;
    symmetrize(est.cov);
    est.ess = 1.0 / cloud.weights.squaredNorm();
    if (est.ess < 0.5 * static_cast<double>(n)) {
      detail::systematic_resample(cloud, rng);
      est.resampled = true;
    }
    out.push_back(std::move(est));
  }
  return out;
}

}  // namespace skewt_estim
