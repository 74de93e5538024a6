#pragma once

// Synthetic GNSS pseudorange scenario. State: [east, north, up] receiver
// offset from the nominal site in metres, plus receiver clock bias in metres.
// Satellites live in an Earth-centred frame; the nominal site is on the +x
// axis at Earth radius, so its local east/north/up axes are +y/+z/+x.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "skewt_estim/errors.hpp"
#include "skewt_estim/linalg.hpp"
#include "skewt_estim/model.hpp"
#include "skewt_estim/skewt.hpp"

namespace skewt_estim::bench {

using Vec3 = Eigen::Vector3d;

inline constexpr double kEarthRadius = 6'371'000.0;
inline constexpr double kOrbitRadius = 26'560'000.0;
inline constexpr double kElevationMaskDeg = 10.0;

inline Vec3 nominal_site() { return {kEarthRadius, 0.0, 0.0}; }

/// Earth-centred position -> local east/north/up relative to the nominal site.
inline Vec3 to_local(const Vec3& ecef) {
  return {ecef.y(), ecef.z(), ecef.x() - kEarthRadius};
}

inline double elevation_deg(const Vec3& ecef) {
  const Vec3 local = to_local(ecef);
  return std::asin(local.z() / local.norm()) * 180.0 / std::numbers::pi;
}

/// n_sats positions on the orbit sphere, all above the elevation mask at the
/// nominal site. Deterministic per seed.
inline std::vector<Vec3> make_constellation(std::size_t n_sats, std::uint64_t seed) {
  if (n_sats < 4) throw InvalidArgument("make_constellation: need at least 4 satellites");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::vector<Vec3> sats;
  const std::size_t max_attempts = 1000 * n_sats;
  for (std::size_t attempt = 0; attempt < max_attempts && sats.size() < n_sats; ++attempt) {
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    const double norm = dir.norm();
    if (norm == 0.0) continue;
    const Vec3 s = kOrbitRadius / norm * dir;
    if (elevation_deg(s) > kElevationMaskDeg) sats.push_back(s);
  }
  if (sats.size() < n_sats)
    throw GeometryError("make_constellation: could not place satellites above the mask");
  return sats;
}

inline std::vector<Vec3> local_positions(const std::vector<Vec3>& sats) {
  std::vector<Vec3> out;
  out.reserve(sats.size());
  for (const auto& s : sats) out.push_back(to_local(s));
  return out;
}

/// Pseudoranges |s_i - p| + bias for a 4-vector state.
inline Vector pseudoranges(const std::vector<Vec3>& sats_local, const Vector& state) {
  Vector y(static_cast<Eigen::Index>(sats_local.size()));
  const Vec3 p = state.head<3>();
  for (std::size_t i = 0; i < sats_local.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = (sats_local[i] - p).norm() + state(3);
  return y;
}

struct Linearization {
  Matrix C;   // n_sats x 4
  Vector y0;  // predicted pseudoranges at the nominal state
};

/// Jacobian of the pseudoranges at `nominal`: row i is [-unit(s_i - p), 1].
inline Linearization linearize(const std::vector<Vec3>& sats, const Vector& nominal) {
  if (nominal.size() != 4) throw InvalidArgument("linearize: nominal state must have 4 entries");
  Linearization lin;
  const auto n = static_cast<Eigen::Index>(sats.size());
  lin.C.resize(n, 4);
  lin.y0.resize(n);
  const Vec3 p = nominal.head<3>();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d = sats[static_cast<std::size_t>(i)] - p;
    const double range = d.norm();
    if (!(range > 0.0)) throw GeometryError("linearize: receiver coincides with a satellite");
    lin.C.row(i) << (-d / range).transpose(), 1.0;
    lin.y0(i) = range + nominal(3);
  }
  return lin;
}

/// Linear pseudo-measurement y - h(nominal) + C nominal, so that
/// y_lin ~= C x + e near the linearization point.
inline Vector linear_measurement(const Linearization& lin, const Vector& y, const Vector& nominal) {
  return y - lin.y0 + lin.C * nominal;
}

struct ScenarioConfig {
  std::string scenario = "scenario";
  double q = 0.5;
  double delta = 5.0;
  double rho = 1.0;
  double nu = 4.0;
  std::size_t K = 100;
  std::size_t n_sats = 8;
  std::size_t n_mc = 100;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators{"stf", "sts", "kf_gated", "rtss_gated"};

  void validate() const {
    if (!(q >= 0.0)) throw InvalidArgument("config: q must be >= 0");
    if (!(delta >= 0.0)) throw InvalidArgument("config: delta must be >= 0");
    if (!(rho > 0.0)) throw InvalidArgument("config: rho must be > 0");
    if (!(nu > 0.0)) throw InvalidArgument("config: nu must be > 0");
    if (K < 1) throw InvalidArgument("config: K must be >= 1");
    if (n_sats < 4) throw InvalidArgument("config: n_sats must be >= 4");
  }
};

inline constexpr double kVerticalProcessStd = 0.2;
inline constexpr double kVerticalPriorStd = 0.22;
inline constexpr double kTrajectoryBiasPriorStd = 0.75;
inline constexpr double kStaticBiasPriorStd = 0.1;

/// Random-walk model with linear measurement matrix left empty (it is
/// relinearized per step). Noise: ST(0, 1 m^2, delta, nu) per satellite.
inline StateSpaceModel scenario_model(const ScenarioConfig& cfg, double bias_prior_std) {
  StateSpaceModel m;
  m.A = Matrix::Identity(4, 4);
  m.Q = Vector{{cfg.q * cfg.q, cfg.q * cfg.q, kVerticalProcessStd * kVerticalProcessStd, 0.0}}
            .asDiagonal();
  const auto ny = static_cast<Eigen::Index>(cfg.n_sats);
  m.C = Matrix::Zero(ny, 4);
  m.R = Vector::Ones(ny);
  m.Delta = Vector::Constant(ny, cfg.delta);
  m.nu = Vector::Constant(ny, cfg.nu);
  m.prior_mean = Vector::Zero(4);
  m.prior_cov = Vector{{cfg.rho, cfg.rho, kVerticalPriorStd * kVerticalPriorStd,
                        bias_prior_std * bias_prior_std}}
                    .asDiagonal();
  return m;
}

struct Trajectory {
  Matrix states;        // K x 4
  Matrix measurements;  // K x n_sats
};

inline std::uint64_t replication_seed(std::uint64_t seed, std::size_t replication) {
  return seed ^ static_cast<std::uint64_t>(replication);
}

/// Draws x_1 from the prior, evolves the random walk and generates skew-t
/// pseudoranges. Deterministic per (cfg.seed, replication).
inline Trajectory simulate(const ScenarioConfig& cfg, const std::vector<Vec3>& sats_local,
                           std::size_t replication,
                           double bias_prior_std = kTrajectoryBiasPriorStd) {
  cfg.validate();
  if (sats_local.size() != cfg.n_sats) throw InvalidArgument("simulate: satellite count mismatch");
  const StateSpaceModel model = scenario_model(cfg, bias_prior_std);
  std::mt19937_64 rng(replication_seed(cfg.seed, replication));
  std::normal_distribution<double> gauss;
  const SkewTComponent noise{1.0, cfg.delta, cfg.nu};
  const Vector prior_sd = model.prior_cov.diagonal().cwiseSqrt();
  const Vector q_sd = model.Q.diagonal().cwiseSqrt();

  Trajectory t;
  const auto steps = static_cast<Eigen::Index>(cfg.K);
  t.states.resize(steps, 4);
  t.measurements.resize(steps, static_cast<Eigen::Index>(cfg.n_sats));
  Vector x(4);
  for (Eigen::Index j = 0; j < 4; ++j) x(j) = prior_sd(j) * gauss(rng);
  for (Eigen::Index k = 0; k < steps; ++k) {
    if (k > 0)
      for (Eigen::Index j = 0; j < 4; ++j) x(j) += q_sd(j) * gauss(rng);
    t.states.row(k) = x.transpose();
    const Vector y = pseudoranges(sats_local, x);
    for (Eigen::Index i = 0; i < y.size(); ++i) t.measurements(k, i) = y(i) + draw(noise, rng);
  }
  return t;
}

inline std::vector<Vec3> scenario_constellation(const ScenarioConfig& cfg) {
  return local_positions(make_constellation(cfg.n_sats, cfg.seed));
}

}  // namespace skewt_estim::bench
