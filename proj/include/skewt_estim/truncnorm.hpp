#pragma once

// Moments of a multivariate normal truncated to {z_i >= 0, i in T} by
// recursive single-constraint truncation, plus a sampling oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <variant>
#include <vector>

#include "skewt_estim/errors.hpp"
#include "skewt_estim/linalg.hpp"

namespace skewt_estim {

struct MomentPair {
  Vector mean;
  Matrix cov;

  Eigen::Index size() const { return mean.size(); }
};

using IndexSet = std::vector<std::size_t>;

namespace order {
struct Optimal {};
/// Each step picks uniformly among the remaining constraints other than the
/// optimal one (the optimal one only when it is the last remaining).
struct RandomOrder {
  std::uint64_t seed = 0;
};
struct Fixed {
  IndexSet sequence;
};
}  // namespace order

using TruncationOrderPolicy = std::variant<order::Optimal, order::RandomOrder, order::Fixed>;

struct HazardResult {
  double epsilon = 0.0;
  double mean_coeff = 0.0;
  double cov_coeff = 0.0;
  bool underflowed = false;
};

/// Below this standardized bound Phi(xi) is treated as underflowed and the
/// asymptotic limits eps + xi -> 0, xi*eps + eps^2 -> 1 are used.
inline constexpr double kHazardUnderflowBound = -37.0;

inline HazardResult hazard(double xi) {
  if (!std::isfinite(xi)) throw InvalidArgument("hazard: non-finite argument");
  HazardResult h;
  if (xi < kHazardUnderflowBound) {
    h.epsilon = -xi;
    h.mean_coeff = -xi;
    h.cov_coeff = 1.0;
    h.underflowed = true;
    return h;
  }
  h.epsilon = normal_pdf(xi) / normal_cdf(xi);
  h.mean_coeff = h.epsilon;
  h.cov_coeff = std::clamp(xi * h.epsilon + h.epsilon * h.epsilon, 0.0, 1.0);
  return h;
}

namespace detail {

inline double degenerate_tolerance(const Matrix& cov) { return 1e-14 * std::abs(cov.trace()); }

inline void check_index(const MomentPair& m, std::size_t k) {
  if (k >= static_cast<std::size_t>(m.size()))
    throw InvalidArgument("truncation index " + std::to_string(k) + " out of range");
}

inline void check_shape(const MomentPair& m) {
  if (m.cov.rows() != m.mean.size() || m.cov.cols() != m.mean.size())
    throw InvalidArgument("moment pair: mean/covariance size mismatch");
}

inline IndexSet validated_set(const MomentPair& m, const IndexSet& set) {
  IndexSet sorted = set;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidArgument("truncation set has duplicate indices");
  for (auto k : sorted) check_index(m, k);
  return sorted;
}

}  // namespace detail

/// Moments of N(mean, cov) truncated by the single constraint z_k >= 0,
/// approximated again as a normal.
inline MomentPair truncate_once(const MomentPair& m, std::size_t k) {
  detail::check_shape(m);
  detail::check_index(m, k);
  const auto ki = static_cast<Eigen::Index>(k);
  const double var = m.cov(ki, ki);
  if (!(var > detail::degenerate_tolerance(m.cov))) throw DegenerateDirection(k, var);

  const double sd = std::sqrt(var);
  const HazardResult h = hazard(m.mean(ki) / sd);
  const Vector col = m.cov.col(ki);

  MomentPair out;
  out.mean = m.mean + (h.mean_coeff / sd) * col;
  out.cov = m.cov - (h.cov_coeff / var) * col * col.transpose();
  symmetrize(out.cov);
  return out;
}

/// Index in `remaining` minimizing mean_i / sqrt(cov_ii), i.e. the
/// constraint that removes the most probability mass. Ties go to the lowest
/// index.
inline std::size_t select_next(const MomentPair& m, const IndexSet& remaining) {
  if (remaining.empty()) throw InvalidArgument("select_next: empty index set");
  detail::check_shape(m);
  const double tol = detail::degenerate_tolerance(m.cov);
  std::size_t best = 0;
  double best_ratio = std::numeric_limits<double>::infinity();
  bool found = false;
  for (auto k : remaining) {
    detail::check_index(m, k);
    const auto ki = static_cast<Eigen::Index>(k);
    const double var = m.cov(ki, ki);
    if (!(var > tol)) throw DegenerateDirection(k, var);
    const double ratio = m.mean(ki) / std::sqrt(var);
    if (!found || ratio < best_ratio || (ratio == best_ratio && k < best)) {
      best = k;
      best_ratio = ratio;
      found = true;
    }
  }
  return best;
}

/// Recursive truncation of N(m.mean, m.cov) to {z_i >= 0, i in truncated}.
inline MomentPair rec_trunc(const MomentPair& m, const IndexSet& truncated,
                            const TruncationOrderPolicy& policy = order::Optimal{}) {
  detail::check_shape(m);
  IndexSet remaining = detail::validated_set(m, truncated);
  MomentPair cur = m;

  if (const auto* fixed = std::get_if<order::Fixed>(&policy)) {
    if (detail::validated_set(m, fixed->sequence) != remaining)
      throw InvalidArgument("fixed truncation order is not a permutation of the truncated set");
    for (auto k : fixed->sequence) cur = truncate_once(cur, k);
    return cur;
  }

  std::mt19937_64 rng;
  const auto* random = std::get_if<order::RandomOrder>(&policy);
  if (random) rng.seed(random->seed);

  while (!remaining.empty()) {
    std::size_t k = select_next(cur, remaining);
    if (random && remaining.size() > 1) {
      IndexSet others;
      others.reserve(remaining.size() - 1);
      for (auto i : remaining)
        if (i != k) others.push_back(i);
      std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
      k = others[pick(rng)];
    }
    cur = truncate_once(cur, k);
    remaining.erase(std::find(remaining.begin(), remaining.end(), k));
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Sampling oracle

struct OracleReport {
  MomentPair moments;
  bool used_gibbs = false;
  std::size_t proposals = 0;
  std::size_t accepted = 0;
};

namespace detail {

// Draw from N(mean, sd^2) restricted to [0, inf).
template <class Rng>
double sample_positive_normal(double mean, double sd, Rng& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif;
  const double lower = -mean / sd;
  if (lower <= 0.5) {
    for (;;) {
      const double z = gauss(rng);
      if (z >= lower) return mean + sd * z;
    }
  }
  // Exponential proposal for the far tail.
  const double alpha = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower - std::log(1.0 - unif(rng)) / alpha;
    const double d = z - alpha;
    if (unif(rng) <= std::exp(-0.5 * d * d)) return mean + sd * z;
  }
}

class MomentAccumulator {
 public:
  explicit MomentAccumulator(const Vector& shift)
      : shift_(shift),
        sum_(Vector::Zero(shift.size())),
        outer_(Matrix::Zero(shift.size(), shift.size())) {}

  void add(const Vector& z) {
    const Vector d = z - shift_;
    sum_ += d;
    outer_.selfadjointView<Eigen::Lower>().rankUpdate(d);
    ++count_;
  }

  std::size_t count() const { return count_; }

  MomentPair moments() const {
    const double n = static_cast<double>(count_);
    const Vector mean_d = sum_ / n;
    Matrix outer = outer_.selfadjointView<Eigen::Lower>();
    MomentPair out;
    out.mean = shift_ + mean_d;
    out.cov = outer / n - mean_d * mean_d.transpose();
    symmetrize(out.cov);
    return out;
  }

 private:
  Vector shift_;
  Vector sum_;
  Matrix outer_;
  std::size_t count_ = 0;
};

}  // namespace detail

inline constexpr std::size_t kOracleProbeProposals = 100'000;
inline constexpr double kOracleMinAcceptance = 1e-3;
inline constexpr std::size_t kGibbsBurnIn = 1'000;
inline constexpr std::size_t kGibbsThinning = 10;

/// Empirical moments of the truncated normal by rejection sampling, falling
/// back to coordinate-wise Gibbs sampling over the truncated block when the
/// acceptance rate is below 1e-3 after 1e5 proposals. In both phases the
/// free coordinates are drawn from their exact conditional given the
/// truncated ones.
inline OracleReport tmnd_oracle_report(const MomentPair& m, const IndexSet& truncated,
                                       std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw InvalidArgument("tmnd_oracle: need at least 1000 samples");
  detail::check_shape(m);
  IndexSet tset = detail::validated_set(m, truncated);
  const auto n = m.size();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  OracleReport report;
  detail::MomentAccumulator acc(m.mean);
  if (tset.empty()) {
    const Matrix root = psd_sqrt(m.cov);
    Vector g(n);
    while (acc.count() < n_samples) {
      for (Eigen::Index i = 0; i < n; ++i) g(i) = gauss(rng);
      acc.add(m.mean + root * g);
    }
    report.proposals = report.accepted = acc.count();
    report.moments = acc.moments();
    return report;
  }

  // Most restrictive constraint first so that proposals are rejected early.
  auto ratio = [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    return m.mean(ii) / std::sqrt(std::max(m.cov(ii, ii), std::numeric_limits<double>::min()));
  };
  std::stable_sort(tset.begin(), tset.end(),
                   [&](std::size_t a, std::size_t b) { return ratio(a) < ratio(b); });
  IndexSet fset;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
    if (std::find(tset.begin(), tset.end(), i) == tset.end()) fset.push_back(i);
  const auto nt = static_cast<Eigen::Index>(tset.size());
  const auto nf = static_cast<Eigen::Index>(fset.size());

  auto sub = [&](const IndexSet& rows, const IndexSet& cols) {
    Matrix out(rows.size(), cols.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        out(r, c) = m.cov(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(cols[c]));
    return out;
  };
  const Matrix s_tt = sub(tset, tset);
  Eigen::LLT<Matrix> llt(s_tt);
  if (llt.info() != Eigen::Success)
    throw OracleInfeasible("tmnd_oracle: truncated block of the covariance is singular");
  const Matrix chol = llt.matrixL();
  const Matrix precision = llt.solve(Matrix::Identity(nt, nt));

  Vector mu_t(nt), mu_f(nf);
  for (Eigen::Index i = 0; i < nt; ++i) mu_t(i) = m.mean(static_cast<Eigen::Index>(tset[i]));
  for (Eigen::Index i = 0; i < nf; ++i) mu_f(i) = m.mean(static_cast<Eigen::Index>(fset[i]));
  Matrix reg, cond_root;
  if (nf > 0) {
    const Matrix s_ft = sub(fset, tset);
    reg = s_ft * precision;
    cond_root = psd_sqrt(sub(fset, fset) - reg * s_ft.transpose());
  }

  Vector zt(nt), g(nt), gf(nf), z(n);
  auto record = [&] {
    for (Eigen::Index i = 0; i < nt; ++i) z(static_cast<Eigen::Index>(tset[i])) = zt(i);
    if (nf > 0) {
      for (Eigen::Index i = 0; i < nf; ++i) gf(i) = gauss(rng);
      const Vector zf = mu_f + reg * (zt - mu_t) + cond_root * gf;
      for (Eigen::Index i = 0; i < nf; ++i) z(static_cast<Eigen::Index>(fset[i])) = zf(i);
    }
    acc.add(z);
  };

  // Sequential draw through the Cholesky factor with early rejection.
  auto propose = [&] {
    for (Eigen::Index i = 0; i < nt; ++i) {
      g(i) = gauss(rng);
      const double v = mu_t(i) + chol.row(i).head(i + 1).dot(g.head(i + 1));
      if (v < 0.0) return false;
      zt(i) = v;
    }
    return true;
  };

  bool rejection_ok = true;
  while (acc.count() < n_samples) {
    ++report.proposals;
    if (propose()) record();
    if (report.proposals == kOracleProbeProposals &&
        static_cast<double>(acc.count()) < kOracleMinAcceptance * kOracleProbeProposals) {
      rejection_ok = false;
      break;
    }
  }
  if (rejection_ok) {
    report.accepted = acc.count();
    report.moments = acc.moments();
    return report;
  }

  report.used_gibbs = true;
  acc = detail::MomentAccumulator(m.mean);
  zt = mu_t.cwiseMax(0.0);
  for (Eigen::Index i = 0; i < nt; ++i)
    if (zt(i) == 0.0) zt(i) = 1e-3 * std::sqrt(s_tt(i, i));

  auto sweep = [&] {
    for (Eigen::Index i = 0; i < nt; ++i) {
      const double pii = precision(i, i);
      const double shift = precision.row(i).dot(zt - mu_t) - pii * (zt(i) - mu_t(i));
      zt(i) = detail::sample_positive_normal(mu_t(i) - shift / pii, 1.0 / std::sqrt(pii), rng);
    }
  };
  for (std::size_t b = 0; b < kGibbsBurnIn; ++b) sweep();
  while (acc.count() < n_samples) {
    for (std::size_t t = 0; t < kGibbsThinning; ++t) sweep();
    record();
  }
  report.accepted = acc.count();
  report.moments = acc.moments();
  return report;
}

inline MomentPair tmnd_oracle(const MomentPair& m, const IndexSet& truncated,
                              std::size_t n_samples, std::uint64_t seed) {
  return tmnd_oracle_report(m, truncated, n_samples, seed).moments;
}

}  // namespace skewt_estim
