#pragma once

// Agreement statistics and t-tests. Standard deviations use the n-1
// denominator; p-values are two-sided.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "tagstrain/error.hpp"

namespace tagstrain {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw DomainError("mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1), two-pass.
inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) throw DomainError("standard deviation needs at least two values");
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

namespace detail {

// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

/// Regularised incomplete beta I_x(a, b). Uses the continued fraction directly
/// below x = (a+1)/(a+b+2) and the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) above.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * detail::beta_cf(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw DomainError("t distribution needs df > 0");
  if (std::isinf(t)) return 0.0;
  // For small |t| the complementary form keeps precision that 1 - x would lose.
  const double t2 = t * t;
  const double p = t2 < df ? 1.0 - incomplete_beta(0.5, 0.5 * df, t2 / (df + t2))
                           : incomplete_beta(0.5 * df, 0.5, df / (df + t2));
  return std::clamp(p, 0.0, 1.0);
}

/// P(T <= t).
inline double t_cdf(double t, double df) {
  const double tail = 0.5 * t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

/// Quantile of Student's t by bisection on the CDF.
inline double t_quantile(double prob, double df) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("t_quantile: probability must be in (0, 1)");
  double lo = -1.0, hi = 1.0;
  while (t_cdf(lo, df) > prob) lo *= 2.0;
  while (t_cdf(hi, df) < prob) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf(mid, df) < prob ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline constexpr double kFamilyAlpha = 0.05;
inline constexpr int kComparisons = 15;

/// Per-test threshold after Bonferroni correction.
inline double bonferroni_threshold(double alpha = kFamilyAlpha, int tests = kComparisons) {
  if (tests < 1) throw DomainError("bonferroni_threshold: need at least one test");
  return alpha / tests;
}

struct AgreementResult {
  double bias = 0.0;
  double precision = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  int n = 0;
  std::vector<std::pair<double, double>> points;  // (mean of pair, difference)
};

/// Differences are a - b.
inline AgreementResult bland_altman(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw DomainError("bland_altman: need at least two pairs");
  std::vector<double> d;
  AgreementResult r;
  for (const auto& [a, b] : pairs) {
    d.push_back(a - b);
    r.points.emplace_back(0.5 * (a + b), a - b);
  }
  r.n = static_cast<int>(pairs.size());
  r.bias = mean_of(d);
  r.precision = sd_of(d);
  r.loa_low = r.bias - 1.96 * r.precision;
  r.loa_high = r.bias + 1.96 * r.precision;
  return r;
}

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;
  double ci_low = 0.0;  // 95% interval of the mean difference
  double ci_high = 0.0;
  double threshold = bonferroni_threshold();
  bool significant = false;
  bool degenerate = false;  // zero variance
};

namespace detail {

inline void finish_test(TTestResult& r, double se) {
  if (r.degenerate) {
    r.ci_low = r.ci_high = r.mean_difference;
  } else {
    const double q = t_quantile(0.975, r.df);
    r.ci_low = r.mean_difference - q * se;
    r.ci_high = r.mean_difference + q * se;
  }
  r.significant = r.p < r.threshold;
}

inline void degenerate_result(TTestResult& r) {
  r.degenerate = true;
  if (r.mean_difference == 0.0) {
    r.t = 0.0;
    r.p = 1.0;
  } else {
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_difference);
    r.p = 0.0;
  }
}

}  // namespace detail

inline TTestResult t_test_one_sample(const std::vector<double>& diffs, double mu0 = 0.0,
                                     double threshold = bonferroni_threshold()) {
  if (diffs.size() < 2) throw DomainError("t_test_one_sample: need at least two values");
  TTestResult r;
  r.threshold = threshold;
  const double n = static_cast<double>(diffs.size());
  r.df = n - 1.0;
  r.mean_difference = mean_of(diffs) - mu0;
  const double se = sd_of(diffs) / std::sqrt(n);
  if (se == 0.0) {
    detail::degenerate_result(r);
  } else {
    r.t = r.mean_difference / se;
    r.p = t_two_sided_p(r.t, r.df);
  }
  r.mean_difference += mu0;
  detail::finish_test(r, se);
  return r;
}

/// Welch's unequal-variance test of mean(a) - mean(b) with Welch-Satterthwaite df.
inline TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b,
                                double threshold = bonferroni_threshold()) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("welch_t_test: each sample needs at least two values");
  TTestResult r;
  r.threshold = threshold;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sd_of(a) * sd_of(a) / na, vb = sd_of(b) * sd_of(b) / nb;
  r.mean_difference = mean_of(a) - mean_of(b);
  const double se = std::sqrt(va + vb);
  if (se == 0.0) {
    r.df = na + nb - 2.0;
    detail::degenerate_result(r);
  } else {
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.t = r.mean_difference / se;
    r.p = t_two_sided_p(r.t, r.df);
  }
  detail::finish_test(r, se);
  return r;
}

}  // namespace tagstrain
