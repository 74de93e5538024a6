#pragma once

// Monte Carlo orchestration over simulated pseudorange trajectories, the
// single-epoch truncation experiment, the truncation-order benchmark and the
// likelihood contour grid.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "skewt_estim/baselines.hpp"
#include "skewt_estim/bench/config.hpp"
#include "skewt_estim/bench/gnss.hpp"
#include "skewt_estim/bench/metrics.hpp"
#include "skewt_estim/filter.hpp"
#include "skewt_estim/smoother.hpp"
#include "skewt_estim/truncnorm.hpp"

namespace skewt_estim::bench {

struct RunRecord {
  std::string scenario;
  std::string estimator;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double mean_nees = 0.0;
  double mean_vb_iterations = 0.0;
  double wall_time = 0.0;
  std::string status = "ok";
  std::string error;  // not written to the CSV
};

inline constexpr const char* kCsvHeader =
    "scenario,estimator,replication,rmse_m,mean_nees,mean_vb_iters,wall_time_s,status";

struct EstimateSequence {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  std::vector<std::size_t> vb_iterations;  // per step (filters) or outer loop (smoother)
};

struct ExperimentOptions {
  VBConfig vb;
  GatingConfig gating;
  /// Write measured wall-clock times; otherwise the column is 0 so that
  /// repeated runs produce identical bytes.
  bool record_timing = false;
};

/// One relinearized estimator run over a simulated trajectory.
class TrajectoryRunner {
 public:
  TrajectoryRunner(const ScenarioConfig& cfg, const std::vector<Vec3>& sats_local,
                   const Trajectory& traj, ExperimentOptions opt)
      : cfg_(cfg), sats_(sats_local), traj_(traj), opt_(std::move(opt)),
        model_(scenario_model(cfg, kTrajectoryBiasPriorStd)) {
    for (Eigen::Index k = 0; k < traj.measurements.rows(); ++k)
      ys_.push_back(traj.measurements.row(k).transpose());
  }

  const StateSpaceModel& model() const { return model_; }

  /// Filter with relinearization at each predicted mean.
  EstimateSequence stf(const TruncationOrderPolicy& policy = order::Optimal{}) {
    EstimateSequence out;
    VBConfig vb = opt_.vb;
    vb.truncation = policy;
    GaussianBelief prior{model_.prior_mean, model_.prior_cov};
    lin_cs_.clear();
    lin_ys_.clear();
    for (std::size_t k = 0; k < ys_.size(); ++k) {
      const auto lin = linearize(sats_, prior.mean);
      const Vector y = linear_measurement(lin, ys_[k], prior.mean);
      lin_cs_.push_back(lin.C);
      lin_ys_.push_back(y);
      if (auto* random = std::get_if<order::RandomOrder>(&policy))
        vb.truncation = order::RandomOrder{random->seed + k};
      try {
        auto [post, diag] = stf_update(model_, lin.C, prior, y, vb);
        out.means.push_back(post.mean);
        out.covs.push_back(post.cov);
        out.vb_iterations.push_back(diag.iterations);
        prior = predict(model_, post);
      } catch (const Error& e) {
        std::throw_with_nested(StepError(e.what(), k));
      }
    }
    return out;
  }

  /// Smoother linearized at the filter's predicted means.
  EstimateSequence sts() {
    stf();
    const auto res = sts_run(model_, lin_ys_, opt_.vb, lin_cs_);
    EstimateSequence out;
    for (const auto& b : res.states) {
      out.means.push_back(b.mean);
      out.covs.push_back(b.cov);
    }
    out.vb_iterations.push_back(res.iterations);
    return out;
  }

  EstimateSequence kf_gated() { return gated(false); }
  EstimateSequence rtss_gated() { return gated(true); }

  /// Bootstrap particle filter on the model linearized at the skew-t
  /// filter's predicted means.
  EstimateSequence pf(std::size_t n_particles, std::uint64_t seed) {
    stf();
    const auto res = pf_run(model_, lin_ys_, n_particles, seed, lin_cs_);
    EstimateSequence out;
    for (const auto& e : res) {
      out.means.push_back(e.mean);
      out.covs.push_back(e.cov);
    }
    return out;
  }

 private:
  EstimateSequence gated(bool smooth) {
    const MatchedNoise matched = moment_match({1.0, cfg_.delta, cfg_.nu});
    StateSpaceModel gaussian = model_;
    gaussian.R = Vector::Constant(model_.ny(), matched.normal_variance);

    std::vector<Matrix> cs;
    std::vector<Vector> ys;
    std::vector<GaussianBelief> filtered;
    GaussianBelief prior{model_.prior_mean, model_.prior_cov};
    for (const auto& y_raw : ys_) {
      const auto lin = linearize(sats_, prior.mean);
      const Vector y = linear_measurement(lin, y_raw, prior.mean).array() - matched.mean;
      cs.push_back(lin.C);
      ys.push_back(y);
      filtered.push_back(kf_gated_update(lin.C, gaussian.R, prior, y, opt_.gating));
      prior = predict(gaussian, filtered.back());
    }
    if (smooth) filtered = rtss_gated_run(gaussian, ys, opt_.gating, cs).smoothed;

    EstimateSequence out;
    for (const auto& b : filtered) {
      out.means.push_back(b.mean);
      out.covs.push_back(b.cov);
    }
    return out;
  }

  const ScenarioConfig& cfg_;
  const std::vector<Vec3>& sats_;
  const Trajectory& traj_;
  ExperimentOptions opt_;
  StateSpaceModel model_;
  std::vector<Vector> ys_;
  std::vector<Matrix> lin_cs_;
  std::vector<Vector> lin_ys_;
};

inline std::size_t particle_count(const std::string& name) {
  if (name == "pf") return 10'000;
  return static_cast<std::size_t>(std::stoull(name.substr(3)));
}

inline EstimateSequence run_estimator(const std::string& name, TrajectoryRunner& runner,
                                      std::uint64_t seed) {
  if (name == "stf") return runner.stf();
  if (name == "stf_rand") return runner.stf(order::RandomOrder{seed});
  if (name == "sts") return runner.sts();
  if (name == "kf_gated") return runner.kf_gated();
  if (name == "rtss_gated") return runner.rtss_gated();
  if (name == "pf" || name.starts_with("pf:")) return runner.pf(particle_count(name), seed);
  throw InvalidArgument("unknown estimator '" + name + "'");
}

/// Runs cfg.n_mc replications of simulate + every estimator. Rows are ordered
/// by (replication, estimator order in cfg); failures become status rows.
inline std::vector<RunRecord> run_experiment(const ScenarioConfig& cfg,
                                             const ExperimentOptions& opt = {}) {
  cfg.validate();
  for (const auto& name : cfg.estimators)
    if (!is_known_estimator(name)) throw ConfigError("unknown estimator '" + name + "'");

  const auto sats = scenario_constellation(cfg);
  std::vector<RunRecord> records;
  for (std::size_t rep = 0; rep < cfg.n_mc; ++rep) {
    const std::uint64_t seed = replication_seed(cfg.seed, rep);
    const Trajectory traj = simulate(cfg, sats, rep);
    if (cfg.estimators.empty()) {
      RunRecord rec;
      rec.scenario = cfg.scenario;
      rec.estimator = "none";
      rec.replication = rep;
      rec.seed = seed;
      rec.status = "simulated";
      records.push_back(std::move(rec));
      continue;
    }
    for (const auto& name : cfg.estimators) {
      RunRecord rec;
      rec.scenario = cfg.scenario;
      rec.estimator = name;
      rec.replication = rep;
      rec.seed = seed;
      TrajectoryRunner runner(cfg, sats, traj, opt);
      const auto start = std::chrono::steady_clock::now();
      try {
        const EstimateSequence est = run_estimator(name, runner, seed);
        rec.rmse = rmse(est.means, traj.states);
        rec.mean_nees = mean(nees(est.means, est.covs, traj.states));
        if (!est.vb_iterations.empty()) {
          double total = 0.0;
          for (auto it : est.vb_iterations) total += static_cast<double>(it);
          rec.mean_vb_iterations = total / static_cast<double>(est.vb_iterations.size());
        }
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.rmse = rec.mean_nees = rec.mean_vb_iterations = 0.0;
      }
      if (opt.record_timing)
        rec.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      records.push_back(std::move(rec));
    }
  }
  return records;
}

inline void write_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kCsvHeader << '\n';
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.9g,%.9g,%.9g,%.6f,%s\n", r.scenario.c_str(),
                  r.estimator.c_str(), r.replication, r.rmse, r.mean_nees, r.mean_vb_iterations,
                  r.wall_time, r.status.c_str());
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Single-epoch experiment: one state and one measurement vector per
// replication; compares recursive-truncation orders against a particle filter.

struct StaticConfig {
  double delta = 5.0;
  double nu = 4.0;
  double rho = 1.0;
  std::size_t n_sats = 8;
  std::size_t replications = 200;
  std::size_t particles = 100'000;
  std::uint64_t seed = 7;
  VBConfig vb;
};

struct StaticReplication {
  Vector truth;
  Vector prior_mean;
  Vector pf_mean;
  Vector stf_mean;
  Vector rand_mean;
  double stf_nees = 0.0;
  std::size_t stf_iterations = 0;

  double stf_distance() const { return (stf_mean - pf_mean).head(3).norm(); }
  double rand_distance() const { return (rand_mean - pf_mean).head(3).norm(); }
  double prior_distance() const { return (prior_mean - pf_mean).head(3).norm(); }
};

inline std::vector<StaticReplication> run_static_experiment(const StaticConfig& sc) {
  ScenarioConfig cfg;
  cfg.q = 0.0;
  cfg.delta = sc.delta;
  cfg.nu = sc.nu;
  cfg.rho = sc.rho;
  cfg.K = 1;
  cfg.n_sats = sc.n_sats;
  cfg.seed = sc.seed;
  const auto sats = scenario_constellation(cfg);
  StateSpaceModel model = scenario_model(cfg, kStaticBiasPriorStd);
  const auto lin = linearize(sats, model.prior_mean);
  model.C = lin.C;

  std::vector<StaticReplication> out;
  for (std::size_t rep = 0; rep < sc.replications; ++rep) {
    const Trajectory traj = simulate(cfg, sats, rep, kStaticBiasPriorStd);
    const Vector y_raw = traj.measurements.row(0).transpose();
    const std::vector<Vector> ys{linear_measurement(lin, y_raw, model.prior_mean)};
    const GaussianBelief prior{model.prior_mean, model.prior_cov};

    StaticReplication r;
    r.truth = traj.states.row(0).transpose();
    r.prior_mean = model.prior_mean;
    VBConfig vb = sc.vb;
    vb.truncation = order::Optimal{};
    const auto [opt_post, opt_diag] = stf_update(model, prior, ys[0], vb);
    vb.truncation = order::RandomOrder{replication_seed(sc.seed, rep)};
    const auto [rand_post, rand_diag] = stf_update(model, prior, ys[0], vb);
    r.stf_mean = opt_post.mean;
    r.rand_mean = rand_post.mean;
    r.stf_iterations = opt_diag.iterations;
    const std::vector<Vector> m{opt_post.mean};
    const std::vector<Matrix> c{opt_post.cov};
    r.stf_nees = nees(m, c, traj.states).front();
    r.pf_mean = pf_run(model, ys, sc.particles, replication_seed(sc.seed + 1, rep)).front().mean;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Truncation-order benchmark: random correlated normals, recursive truncation
// with optimal and random order against the sampling oracle.

struct TruncBenchConfig {
  std::size_t min_dim = 3;
  std::size_t max_dim = 8;
  std::size_t cases = 200;
  std::size_t oracle_samples = 50'000;
  double max_correlation = 0.8;
  std::uint64_t seed = 11;
};

struct TruncBenchCase {
  MomentPair input;
  IndexSet truncated;
  double min_ratio = 0.0;
  double opt_distance = 0.0;
  double rand_distance = 0.0;
  bool used_gibbs = false;
};

/// Random case: log-uniform scales, correlations bounded by max_correlation,
/// standardized means in [-1.5, 1.5] except one truncated coordinate forced
/// into [-2.5, -1].
inline TruncBenchCase make_trunc_case(std::size_t dim, std::mt19937_64& rng,
                                      double max_correlation) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(dim);
  TruncBenchCase c;
  for (;;) {
    Matrix w(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) w(i, j) = gauss(rng);
    Matrix cov = w * w.transpose() / static_cast<double>(n);
    const Vector inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
    Matrix corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    const double max_off = (corr - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
    if (max_off > max_correlation) continue;
    Vector sd(n), mean(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      sd(i) = std::exp(2.0 * unif(rng) - 1.0);
      mean(i) = sd(i) * (3.0 * unif(rng) - 1.5);
    }
    c.input.mean = mean;
    c.input.cov = sd.asDiagonal() * corr * sd.asDiagonal();
    symmetrize(c.input.cov);

    c.truncated.clear();
    std::uniform_int_distribution<std::size_t> count(2, dim);
    const std::size_t nt = count(rng);
    IndexSet all(dim);
    for (std::size_t i = 0; i < dim; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    c.truncated.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(nt));
    std::sort(c.truncated.begin(), c.truncated.end());
    const auto forced = static_cast<Eigen::Index>(c.truncated[std::uniform_int_distribution<std::size_t>(0, nt - 1)(rng)]);
    mean(forced) = sd(forced) * (-1.0 - 1.5 * unif(rng));
    c.input.mean = mean;

    c.min_ratio = std::numeric_limits<double>::infinity();
    for (auto i : c.truncated) {
      const auto ii = static_cast<Eigen::Index>(i);
      c.min_ratio = std::min(c.min_ratio, mean(ii) / sd(ii));
    }
    if (c.min_ratio < -1.0) return c;
  }
}

inline std::vector<TruncBenchCase> run_trunc_bench(const TruncBenchConfig& tc) {
  if (tc.min_dim < 1 || tc.max_dim < tc.min_dim)
    throw InvalidArgument("truncnorm bench: bad dimension range");
  std::mt19937_64 rng(tc.seed);
  std::uniform_int_distribution<std::size_t> dim_dist(tc.min_dim, tc.max_dim);
  std::vector<TruncBenchCase> out;
  for (std::size_t i = 0; i < tc.cases; ++i) {
    TruncBenchCase c = make_trunc_case(dim_dist(rng), rng, tc.max_correlation);
    const auto report = tmnd_oracle_report(c.input, c.truncated, tc.oracle_samples, tc.seed + 1000 + i);
    const MomentPair opt = rec_trunc(c.input, c.truncated, order::Optimal{});
    const MomentPair rnd = rec_trunc(c.input, c.truncated, order::RandomOrder{tc.seed + i});
    c.opt_distance = (opt.mean - report.moments.mean).norm();
    c.rand_distance = (rnd.mean - report.moments.mean).norm();
    c.used_gibbs = report.used_gibbs;
    out.push_back(std::move(c));
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Likelihood contours for three range measurements under moment-matched
// normal, Student-t and skew-t noise.

struct ContourConfig {
  double delta = 5.0;
  double nu = 4.0;
  std::size_t outliers = 1;
  double outlier_size = 8.0;
  double half_width = 10.0;
  std::size_t grid = 101;
};

struct ContourPoint {
  double x = 0.0;
  double y = 0.0;
  double normal = 0.0;
  double student = 0.0;
  double skew = 0.0;
};

inline std::vector<ContourPoint> likelihood_contours(const ContourConfig& cc) {
  if (cc.grid < 2) throw InvalidArgument("contours: grid must have at least 2 points");
  const SkewTComponent noise{1.0, cc.delta, cc.nu};
  const MatchedNoise matched = moment_match(noise);
  const Eigen::Vector2d anchors[3] = {{0.0, 10.0}, {-8.660254037844386, -5.0},
                                      {8.660254037844386, -5.0}};
  double ranges[3];
  for (int i = 0; i < 3; ++i)
    ranges[i] = anchors[i].norm() + matched.mean +
                (static_cast<std::size_t>(i) < cc.outliers ? cc.outlier_size : 0.0);

  std::vector<ContourPoint> out;
  const double step = 2.0 * cc.half_width / static_cast<double>(cc.grid - 1);
  for (std::size_t iy = 0; iy < cc.grid; ++iy) {
    for (std::size_t ix = 0; ix < cc.grid; ++ix) {
      ContourPoint p;
      p.x = -cc.half_width + step * static_cast<double>(ix);
      p.y = -cc.half_width + step * static_cast<double>(iy);
      for (int i = 0; i < 3; ++i) {
        const double e = ranges[i] - (anchors[i] - Eigen::Vector2d(p.x, p.y)).norm();
        const double centred = e - matched.mean;
        p.normal += -0.5 * centred * centred / matched.normal_variance -
                    0.5 * std::log(2.0 * std::numbers::pi * matched.normal_variance);
        p.student += skewt_estim::detail::log_student_t(centred, matched.t_scale_sq, matched.t_dof);
        p.skew += log_pdf(noise, e);
      }
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace skewt_estim::bench
