#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "skewt_estim/bench/config.hpp"
#include "skewt_estim/bench/experiment.hpp"
#include "skewt_estim/bench/gnss.hpp"
#include "skewt_estim/bench/metrics.hpp"

using namespace skewt_estim;
namespace sb = skewt_estim::bench;

TEST(Constellation, RadiusAndElevationMask) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto sats = sb::make_constellation(8, seed);
    ASSERT_EQ(sats.size(), 8u);
    for (const auto& s : sats) {
      EXPECT_NEAR(s.norm(), sb::kOrbitRadius, 1.0);
      EXPECT_GT(sb::elevation_deg(s), sb::kElevationMaskDeg);
    }
  }
  EXPECT_EQ(sb::make_constellation(6, 4), sb::make_constellation(6, 4));
  EXPECT_THROW(sb::make_constellation(3, 1), InvalidArgument);
}

TEST(Linearize, AxisAlignedSatellite) {
  const std::vector<sb::Vec3> sats{{1000.0, 0.0, 0.0}, {0.0, 0.0, 2e7}};
  const auto lin = sb::linearize(sats, Vector::Zero(4));
  EXPECT_EQ(lin.C.row(0), (Eigen::RowVector4d(-1.0, 0.0, 0.0, 1.0)));
  EXPECT_TRUE((lin.C.col(3).array() == 1.0).all());
  EXPECT_DOUBLE_EQ(lin.y0(0), 1000.0);
  EXPECT_THROW(sb::linearize({{0.0, 0.0, 0.0}}, Vector::Zero(4)), GeometryError);
  EXPECT_THROW(sb::linearize(sats, Vector::Zero(3)), InvalidArgument);
}

TEST(Linearize, FarFieldStability) {
  const auto sats = sb::local_positions(sb::make_constellation(8, 5));
  std::vector<sb::Vec3> doubled;
  const sb::Vec3 site(0.0, 0.0, 0.0);
  for (const auto& s : sats) doubled.push_back(site + 2.0 * (s - site));
  const Vector nominal{{3.0, -2.0, 1.0, 0.5}};
  const auto a = sb::linearize(sats, nominal);
  const auto b = sb::linearize(doubled, nominal);
  EXPECT_LT((a.C - b.C).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Linearize, MatchesFiniteDifferences) {
  const auto sats = sb::local_positions(sb::make_constellation(8, 6));
  const Vector x{{10.0, -5.0, 2.0, 3.0}};
  const auto lin = sb::linearize(sats, x);
  for (int j = 0; j < 4; ++j) {
    Vector dx = Vector::Zero(4);
    // Large step: ranges are ~2e7 m, so small steps lose precision to cancellation.
    dx(j) = 1.0;
    const Vector fd = (sb::pseudoranges(sats, x + dx) - sb::pseudoranges(sats, x - dx)) / 2.0;
    EXPECT_LT((fd - lin.C.col(j)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Simulate, StaticPositionWhenQIsZero) {
  sb::ScenarioConfig cfg;
  cfg.q = 0.0;
  cfg.K = 30;
  const auto sats = sb::scenario_constellation(cfg);
  const auto traj = sb::simulate(cfg, sats, 0);
  for (Eigen::Index k = 1; k < traj.states.rows(); ++k) {
    EXPECT_EQ(traj.states(k, 0), traj.states(0, 0));
    EXPECT_EQ(traj.states(k, 1), traj.states(0, 1));
    EXPECT_EQ(traj.states(k, 3), traj.states(0, 3));
  }
  // The vertical component keeps its 0.2 m random walk.
  EXPECT_NE(traj.states(1, 2), traj.states(0, 2));
}

TEST(Simulate, GaussianLimitResidualsAreStandardNormal) {
  sb::ScenarioConfig cfg;
  cfg.delta = 0.0;
  cfg.nu = 1e8;
  cfg.K = 1000;
  const auto sats = sb::scenario_constellation(cfg);
  const auto traj = sb::simulate(cfg, sats, 3);
  std::vector<double> res;
  for (Eigen::Index k = 0; k < traj.states.rows(); ++k) {
    const Vector r = traj.measurements.row(k).transpose() -
                     sb::pseudoranges(sats, traj.states.row(k).transpose());
    res.insert(res.end(), r.data(), r.data() + r.size());
  }
  // Kolmogorov-Smirnov statistic against N(0, 1); 1% critical value 1.628/sqrt(n).
  std::sort(res.begin(), res.end());
  const double n = static_cast<double>(res.size());
  double d = 0.0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    const double f = normal_cdf(res[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  EXPECT_LT(d, 1.628 / std::sqrt(n));
}

TEST(Simulate, SkewedResidualMeanMatchesMoments) {
  sb::ScenarioConfig cfg;
  cfg.q = 0.5;
  cfg.delta = 5.0;
  cfg.nu = 4.0;
  cfg.K = 1000;
  const auto sats = sb::scenario_constellation(cfg);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t rep = 0; rep < 125; ++rep) {
    const auto traj = sb::simulate(cfg, sats, rep);
    for (Eigen::Index k = 0; k < traj.states.rows(); ++k) {
      const Vector r = traj.measurements.row(k).transpose() -
                       sb::pseudoranges(sats, traj.states.row(k).transpose());
      sum += r.sum();
      count += static_cast<std::size_t>(r.size());
    }
  }
  const double expected = moments({1.0, 5.0, 4.0}).mean;
  EXPECT_NEAR(sum / static_cast<double>(count), expected, 0.01 * expected);
}

TEST(Simulate, DeterministicAndValidated) {
  sb::ScenarioConfig cfg;
  cfg.K = 5;
  const auto sats = sb::scenario_constellation(cfg);
  EXPECT_EQ(sb::simulate(cfg, sats, 2).measurements, sb::simulate(cfg, sats, 2).measurements);
  EXPECT_NE(sb::simulate(cfg, sats, 2).measurements, sb::simulate(cfg, sats, 3).measurements);
  cfg.rho = 0.0;
  EXPECT_THROW(sb::simulate(cfg, sats, 0), InvalidArgument);
}

TEST(Metrics, RmseCases) {
  Matrix truth = Matrix::Zero(3, 4);
  std::vector<Vector> est(3, Vector::Zero(4));
  EXPECT_EQ(sb::rmse(est, truth), 0.0);
  for (auto& e : est) e(0) = 1.0;
  EXPECT_DOUBLE_EQ(sb::rmse(est, truth), 1.0);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  for (auto& e : est)
    for (int j = 0; j < 4; ++j) e(j) = gauss(rng);
  double manual = 0.0;
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 3; ++j) manual += std::pow(est[static_cast<std::size_t>(k)](j), 2);
  EXPECT_NEAR(sb::rmse(est, truth), std::sqrt(manual / 3.0), 1e-14);
  EXPECT_THROW(sb::rmse(std::vector<Vector>(2, Vector::Zero(4)), truth), InvalidArgument);
}

TEST(Metrics, NeesCases) {
  const Matrix truth = Matrix::Zero(1, 4);
  const std::vector<Matrix> covs{Matrix::Identity(4, 4)};
  EXPECT_EQ(sb::nees(std::vector<Vector>{Vector::Zero(4)}, covs, truth)[0], 0.0);
  EXPECT_DOUBLE_EQ(sb::nees(std::vector<Vector>{Vector{{1.0, 1.0, 1.0, 9.0}}}, covs, truth)[0], 3.0);
  EXPECT_THROW(sb::nees(std::vector<Vector>{Vector::Zero(4)}, std::vector<Matrix>{Matrix::Zero(4, 4)}, truth),
               NumericalFailure);
}

TEST(Metrics, ConsistentEstimatorHasNeesThree) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss;
  const Matrix cov{{2.0, 0.5, 0.0, 0.0}, {0.5, 1.0, 0.2, 0.0}, {0.0, 0.2, 0.5, 0.0}, {0.0, 0.0, 0.0, 1.0}};
  const Matrix root = Eigen::LLT<Matrix>(cov).matrixL();
  const int n = 10'000;
  std::vector<Vector> est;
  std::vector<Matrix> covs(n, cov);
  for (int i = 0; i < n; ++i) {
    Vector g(4);
    for (int j = 0; j < 4; ++j) g(j) = gauss(rng);
    est.push_back(root * g);
  }
  const double m = sb::mean(sb::nees(est, covs, Matrix::Zero(n, 4)));
  EXPECT_GT(m, 2.9);
  EXPECT_LT(m, 3.1);
}

TEST(Config, ParsesAllKeys) {
  const auto cfg = sb::parse_config_string(
      "# comment\n"
      "scenario = test_a\n"
      "q = 5   # trailing comment\n"
      "delta = 3.5\nrho = 2\nnu = 6\nK = 40\nn_sats = 7\nn_mc = 12\nseed = 99\n"
      "estimators = stf, pf:500 ,rtss_gated\n");
  EXPECT_EQ(cfg.scenario, "test_a");
  EXPECT_EQ(cfg.q, 5.0);
  EXPECT_EQ(cfg.delta, 3.5);
  EXPECT_EQ(cfg.rho, 2.0);
  EXPECT_EQ(cfg.nu, 6.0);
  EXPECT_EQ(cfg.K, 40u);
  EXPECT_EQ(cfg.n_sats, 7u);
  EXPECT_EQ(cfg.n_mc, 12u);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.estimators, (std::vector<std::string>{"stf", "pf:500", "rtss_gated"}));
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(sb::parse_config_string("colour = blue\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("q = 1\nq = 2\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("q = fast\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("q\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("n_sats = 3\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("estimators = stf, ukf\n"), sb::ConfigError);
  EXPECT_THROW(sb::parse_config_string("estimators = pf:10\n"), sb::ConfigError);
  EXPECT_THROW(sb::load_config("/nonexistent/file.cfg"), sb::ConfigError);
}

TEST(Config, EmptyEstimatorList) {
  EXPECT_TRUE(sb::parse_config_string("estimators =\n").estimators.empty());
}

TEST(Experiment, NoReplicationsGivesHeaderOnly) {
  sb::ScenarioConfig cfg;
  cfg.n_mc = 0;
  std::ostringstream out;
  sb::write_csv(out, sb::run_experiment(cfg));
  EXPECT_EQ(out.str(), std::string(sb::kCsvHeader) + "\n");
}

TEST(Experiment, SimulationOnlyRows) {
  sb::ScenarioConfig cfg;
  cfg.n_mc = 3;
  cfg.K = 5;
  cfg.estimators.clear();
  const auto rows = sb::run_experiment(cfg);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) EXPECT_EQ(r.status, "simulated");
}

TEST(Experiment, RowsOrderedAndValid) {
  sb::ScenarioConfig cfg;
  cfg.scenario = "order";
  cfg.n_mc = 2;
  cfg.K = 15;
  cfg.estimators = {"stf", "stf_rand", "sts", "kf_gated", "rtss_gated", "pf:300"};
  const auto rows = sb::run_experiment(cfg);
  ASSERT_EQ(rows.size(), 12u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].replication, i / 6);
    EXPECT_EQ(rows[i].estimator, cfg.estimators[i % 6]);
    EXPECT_EQ(rows[i].status, "ok") << rows[i].error;
    EXPECT_GE(rows[i].rmse, 0.0);
    EXPECT_GE(rows[i].mean_nees, 0.0);
    EXPECT_EQ(rows[i].wall_time, 0.0);
  }
  EXPECT_GT(rows[0].mean_vb_iterations, 1.0);
}

TEST(Experiment, CsvIsByteIdenticalAcrossRuns) {
  sb::ScenarioConfig cfg;
  cfg.n_mc = 2;
  cfg.K = 10;
  std::ostringstream a, b;
  sb::write_csv(a, sb::run_experiment(cfg));
  sb::write_csv(b, sb::run_experiment(cfg));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Experiment, UnknownEstimatorIsConfigError) {
  sb::ScenarioConfig cfg;
  cfg.estimators = {"magic"};
  EXPECT_THROW(sb::run_experiment(cfg), sb::ConfigError);
}

TEST(TruncBench, CasesSatisfyConstraints) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto c = sb::make_trunc_case(3 + static_cast<std::size_t>(i % 6), rng, 0.8);
    EXPECT_LT(c.min_ratio, -1.0);
    const Vector sd = c.input.cov.diagonal().cwiseSqrt();
    const Matrix corr = sd.cwiseInverse().asDiagonal() * c.input.cov * sd.cwiseInverse().asDiagonal();
    EXPECT_LE((corr - Matrix::Identity(corr.rows(), corr.cols())).cwiseAbs().maxCoeff(), 0.8 + 1e-12);
    EXPECT_GE(c.truncated.size(), 2u);
  }
}

TEST(TruncBench, Median) {
  EXPECT_EQ(sb::median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(sb::median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_EQ(sb::median({}), 0.0);
}

TEST(Contours, MaximumNearTruthWithoutOutliers) {
  sb::ContourConfig cc;
  cc.outliers = 0;
  cc.grid = 41;
  const auto pts = sb::likelihood_contours(cc);
  ASSERT_EQ(pts.size(), 41u * 41u);
  auto best = [&](auto member) {
    return *std::max_element(pts.begin(), pts.end(),
                             [&](const auto& a, const auto& b) { return a.*member < b.*member; });
  };
  for (auto member : {&sb::ContourPoint::normal, &sb::ContourPoint::student, &sb::ContourPoint::skew}) {
    const auto p = best(member);
    EXPECT_LT(std::hypot(p.x, p.y), 2.0);
  }
  EXPECT_THROW(sb::likelihood_contours({.grid = 1}), InvalidArgument);
}

TEST(StaticExperiment, OptimalOrderNotWorseThanRandomOrder) {
  std::vector<double> med_opt, med_rand;
  for (double delta : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
    sb::StaticConfig sc;
    sc.delta = delta;
    sc.nu = 1e8;  // skew-normal noise: isolates truncation error from the lambda approximation
    sc.replications = 500;
    const auto reps = sb::run_static_experiment(sc);
    std::vector<double> opt, rnd;
    for (const auto& r : reps) {
      opt.push_back(r.stf_distance());
      rnd.push_back(r.rand_distance());
    }
    EXPECT_LE(sb::median(opt), sb::median(rnd) + 1e-12) << "delta = " << delta;
  }
}
