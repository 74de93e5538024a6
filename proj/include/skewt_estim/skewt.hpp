#pragma once

// Univariate skew-t noise ST(0, R, Delta, nu) through its hierarchical form
//   lambda ~ Gamma(nu/2, rate nu/2),  u | lambda ~ N+(0, 1/lambda),
//   e | u, lambda ~ N(Delta u, R / lambda).
// spread_sq stores R (the squared spread), not sqrt(R).

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include <cmath>
#include <cstdint>
#include <iterator>
#include <map>
#include <mutex>
#include <tuple>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

#include "skewt_estim/errors.hpp"
#include "skewt_estim/linalg.hpp"

namespace skewt_estim {

struct SkewTComponent {
  double spread_sq = 1.0;
  double shape = 0.0;
  double dof = 4.0;

  void validate() const {
    if (!(spread_sq > 0.0) || !std::isfinite(spread_sq))
      throw InvalidArgument("skew-t: spread_sq must be positive");
    if (!std::isfinite(shape)) throw InvalidArgument("skew-t: shape must be finite");
    if (!(dof > 0.0)) throw InvalidArgument("skew-t: dof must be positive");
  }
};

struct NoiseModel {
  std::vector<SkewTComponent> components;

  std::size_t size() const { return components.size(); }
};

/// One draw using the hierarchical representation.
template <class Rng>
double draw(const SkewTComponent& c, Rng& rng) {
  std::gamma_distribution<double> gamma(0.5 * c.dof, 2.0 / c.dof);
  std::normal_distribution<double> gauss;
  const double lambda = gamma(rng);
  const double u = std::abs(gauss(rng)) / std::sqrt(lambda);
  return c.shape * u + std::sqrt(c.spread_sq / lambda) * gauss(rng);
}

inline std::vector<double> sample(const SkewTComponent& c, std::size_t n, std::uint64_t seed) {
  c.validate();
  if (n < 1) throw InvalidArgument("skew-t sample: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (auto& e : out) e = draw(c, rng);
  return out;
}

/// log Phi(x), accurate far into the lower tail.
inline double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > -37.0) return std::log(normal_cdf(x));
  const double r = 1.0 / (x * x);
  return log_normal_pdf(x) - std::log(-x) + std::log1p(-r * (1.0 - 3.0 * r * (1.0 - 5.0 * r)));
}

namespace detail {

// log of the Student-t density with location 0, squared scale s2, dof nu.
inline double log_student_t(double e, double s2, double nu) {
  const double log_ratio = -std::log(boost::math::tgamma_delta_ratio(0.5 * nu, 0.5));
  return log_ratio - 0.5 * std::log(nu * std::numbers::pi * s2) -
         0.5 * (nu + 1.0) * std::log1p(e * e / (nu * s2));
}

// log E[Phi(c sqrt(lambda))] for lambda ~ Gamma(a, rate b), by adaptive
// Gauss-Kronrod quadrature over w = log(lambda) centred on the mode of the
// integrand.
inline double log_expected_cdf(double a, double b, double c) {
  const double w0 = std::log(a / b);
  const double log_peak = std::log(a * boost::math::gamma_p_derivative(a, a));
  auto log_integrand = [&](double w) {
    const double d = w - w0;
    return log_peak + a * (d - std::expm1(d)) + log_normal_cdf(c * std::exp(0.5 * w));
  };

  const double width = 1.0 / std::sqrt(a);
  const double pull = c < 0.0 ? std::log1p(0.5 * c * c / b) : 0.0;
  const double lo = w0 - pull - 40.0 * width - 5.0;
  const double hi = w0 + 40.0 * width + 5.0;
  const auto found = boost::math::tools::brent_find_minima(
      [&](double w) { return -log_integrand(w); }, lo, hi, 52);
  const double mode = found.first;
  const double f_mode = -found.second;

  const double h = 1e-3 * width;
  const double curvature =
      (log_integrand(mode + h) - 2.0 * f_mode + log_integrand(mode - h)) / (h * h);
  const double scale = curvature < 0.0 ? 1.0 / std::sqrt(-curvature) : width;

  auto integrand = [&](double t) { return std::exp(log_integrand(mode + scale * t) - f_mode); };
  double total = 0.0;
  double err_total = 0.0;
  const double breaks[] = {-80.0, -12.0, -4.0, 4.0, 12.0, 80.0};
  for (std::size_t i = 0; i + 1 < std::size(breaks); ++i) {
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, breaks[i], breaks[i + 1], 15, 1e-12, &err);
    err_total += err;
  }
  if (!std::isfinite(total) || !(total > 0.0) || err_total > 1e-8 * total)
    throw IntegrationError("skew-t log_pdf: quadrature did not converge", err_total, total);
  return f_mode + std::log(scale * total);
}

}  // namespace detail

/// Log density: the Gamma mixing over lambda is split into a Student-t
/// factor (closed form) and E[Phi(c sqrt(lambda))] under the tilted Gamma
/// (quadrature).
inline double log_pdf(const SkewTComponent& c, double e) {
  c.validate();
  if (!std::isfinite(e)) throw InvalidArgument("skew-t log_pdf: non-finite argument");
  const double s2 = c.shape * c.shape + c.spread_sq;
  const double log_t = detail::log_student_t(e, s2, c.dof);
  if (c.shape == 0.0) return log_t;
  const double a = 0.5 * (c.dof + 1.0);
  const double b = 0.5 * (c.dof + e * e / s2);
  const double slope = c.shape * e / std::sqrt(c.spread_sq * s2);
  return std::numbers::ln2 + log_t + detail::log_expected_cdf(a, b, slope);
}

struct SkewTMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline SkewTMoments moments(const SkewTComponent& c) {
  c.validate();
  if (!(c.dof > 2.0)) throw MomentsUndefined("skew-t moments need dof > 2");
  const double nu = c.dof;
  // E[lambda^{-1/2}] = sqrt(nu/2) Gamma((nu-1)/2) / Gamma(nu/2)
  const double inv_sqrt_lambda =
      std::sqrt(0.5 * nu) * boost::math::tgamma_delta_ratio(0.5 * (nu - 1.0), 0.5);
  const double mean_u = std::sqrt(2.0 / std::numbers::pi) * inv_sqrt_lambda;
  SkewTMoments m;
  m.mean = c.shape * mean_u;
  m.variance = (c.shape * c.shape + c.spread_sq) * nu / (nu - 2.0) - m.mean * m.mean;
  return m;
}

/// Normal and Student-t noise with the same first two moments. The mean
/// offset is reported separately and must be removed by the caller.
struct MatchedNoise {
  double mean = 0.0;
  double normal_variance = 0.0;
  double t_scale_sq = 0.0;
  double t_dof = 0.0;
};

inline MatchedNoise moment_match(const SkewTComponent& c) {
  const SkewTMoments m = moments(c);
  MatchedNoise out;
  out.mean = m.mean;
  out.normal_variance = m.variance;
  out.t_dof = c.dof;
  out.t_scale_sq = m.variance * (c.dof - 2.0) / c.dof;
  return out;
}

/// Tabulated log density for hot loops (particle weights). Cubic B-spline on
/// a uniform grid; exact evaluation outside the tabulated range.
class LogPdfTable {
 public:
  LogPdfTable(const SkewTComponent& c, double lo, double hi, double step = 0.01)
      : component_(c), lo_(lo), hi_(hi) {
    c.validate();
    if (!(hi > lo) || !(step > 0.0)) throw InvalidArgument("LogPdfTable: bad grid");
    const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step)) + 1;
    const double h = (hi - lo) / static_cast<double>(n - 1);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = log_pdf(c, lo + h * static_cast<double>(i));
    spline_ = std::make_shared<Spline>(values.begin(), values.end(), lo, h);
  }

  double operator()(double e) const {
    if (e < lo_ || e > hi_) return log_pdf(component_, e);
    return (*spline_)(e);
  }

  const SkewTComponent& component() const { return component_; }

 private:
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
  SkewTComponent component_;
  double lo_;
  double hi_;
  std::shared_ptr<Spline> spline_;
};

/// Process-wide cache of tables over +-span noise scales, grid step 0.01
/// scales. Thread-safe.
inline std::shared_ptr<const LogPdfTable> shared_log_pdf_table(const SkewTComponent& c,
                                                               double span = 60.0) {
  using Key = std::tuple<double, double, double, double>;
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const LogPdfTable>> cache;
  const Key key{c.spread_sq, c.shape, c.dof, span};
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const double scale = std::sqrt(c.spread_sq + c.shape * c.shape);
  const double lo = -span * scale + std::min(0.0, c.shape);
  const double hi = span * scale + std::max(0.0, c.shape);
  auto table = std::make_shared<const LogPdfTable>(c, lo, hi, 0.01 * scale);
  cache.emplace(key, table);
  return table;
}

}  // namespace skewt_estim
