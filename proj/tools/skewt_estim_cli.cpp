#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "skewt_estim/bench/config.hpp"
#include "skewt_estim/bench/experiment.hpp"

namespace fs = std::filesystem;
namespace sb = skewt_estim::bench;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitStrict = 2;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

// "3..8" or "5"
std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw CLI::ValidationError("--dims", "expected N or N..M, got '" + text + "'");
    return v;
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const auto v = number(text);
    return {v, v};
  }
  return {number(std::string_view(text).substr(0, dots)),
          number(std::string_view(text).substr(dots + 2))};
}

int cmd_run(const std::string& config_path, const fs::path& out_dir, bool strict, bool timing) {
  sb::ScenarioConfig cfg;
  try {
    cfg = sb::load_config(config_path);
  } catch (const sb::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  sb::ExperimentOptions opt;
  opt.record_timing = timing;
  const auto records = sb::run_experiment(cfg, opt);

  fs::create_directories(out_dir);
  const fs::path csv = out_dir / (cfg.scenario + ".csv");
  auto out = open_output(csv);
  sb::write_csv(out, records);

  std::size_t failed = 0;
  for (const auto& r : records) {
    if (r.status != "failed") continue;
    ++failed;
    std::cerr << "warning: " << r.estimator << " failed on replication " << r.replication << ": "
              << r.error << '\n';
  }
  std::cout << "wrote " << records.size() << " rows to " << csv.string() << '\n';
  return strict && failed > 0 ? kExitStrict : 0;
}

int cmd_truncnorm_bench(const std::string& dims, std::size_t cases, std::size_t samples,
                        std::uint64_t seed, const fs::path& out_dir) {
  sb::TruncBenchConfig tc;
  std::tie(tc.min_dim, tc.max_dim) = parse_range(dims);
  tc.cases = cases;
  tc.oracle_samples = samples;
  tc.seed = seed;
  const auto results = sb::run_trunc_bench(tc);

  fs::create_directories(out_dir);
  auto out = open_output(out_dir / "truncnorm_bench.csv");
  out << "case,dim,n_truncated,min_ratio,rt_opt_dist,rt_rand_dist,oracle\n";
  std::vector<double> opt, rnd;
  char buf[256];
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    std::snprintf(buf, sizeof buf, "%zu,%td,%zu,%.9g,%.9g,%.9g,%s\n", i, r.input.mean.size(),
                  r.truncated.size(), r.min_ratio, r.opt_distance, r.rand_distance,
                  r.used_gibbs ? "gibbs" : "rejection");
    out << buf;
    opt.push_back(r.opt_distance);
    rnd.push_back(r.rand_distance);
  }
  std::printf("median distance to oracle mean: optimal %.6g, random %.6g\n", sb::median(opt),
              sb::median(rnd));
  return 0;
}

int cmd_contours(double delta, double nu, std::size_t grid, std::size_t outliers,
                 const fs::path& out_path) {
  sb::ContourConfig cc;
  cc.delta = delta;
  cc.nu = nu;
  cc.grid = grid;
  cc.outliers = outliers;
  const auto points = sb::likelihood_contours(cc);
  auto out = open_output(out_path);
  out << "x,y,loglik_normal,loglik_t,loglik_skewt\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g,%.9g\n", p.x, p.y, p.normal, p.student,
                  p.skew);
    out << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skew-t filtering and smoothing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "results";
  bool strict = false;
  bool timing = false;
  auto* run = app.add_subcommand("run", "Monte Carlo trajectory experiment from a config file");
  run->add_option("--config", config_path, "scenario config file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--strict", strict, "exit with status 2 if any estimator run fails");
  run->add_flag("--timing", timing, "record wall-clock times (output no longer reproducible)");

  std::string dims = "3..8";
  std::size_t cases = 200;
  std::size_t samples = 50'000;
  std::uint64_t bench_seed = 11;
  std::string bench_out = "results";
  auto* bench = app.add_subcommand("truncnorm-bench", "recursive truncation order benchmark");
  bench->add_option("--dims", dims, "dimension range N..M");
  bench->add_option("--cases", cases, "number of random cases")->check(CLI::PositiveNumber);
  bench->add_option("--samples", samples, "oracle sample count")->check(CLI::Range(1000, 100'000'000));
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--out", bench_out, "output directory");

  double delta = 5.0;
  double nu = 4.0;
  std::size_t grid = 101;
  std::size_t outliers = 1;
  std::string contour_out = "contours.csv";
  auto* contours = app.add_subcommand("contours", "likelihood grid for three range measurements");
  contours->add_option("--delta", delta, "skewness parameter (m)")->check(CLI::NonNegativeNumber);
  contours->add_option("--nu", nu, "degrees of freedom (> 2)");
  contours->add_option("--grid", grid, "grid points per axis")->check(CLI::Range(2, 2001));
  contours->add_option("--outliers", outliers, "number of ranges with a positive outlier")
      ->check(CLI::Range(0, 3));
  contours->add_option("--out", contour_out, "output CSV file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir, strict, timing);
    if (*bench) return cmd_truncnorm_bench(dims, cases, samples, bench_seed, bench_out);
    if (*contours) return cmd_contours(delta, nu, grid, outliers, contour_out);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
