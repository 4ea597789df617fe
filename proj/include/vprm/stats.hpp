#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "vprm/core.hpp"

namespace vprm::stats {

inline double mean(std::span<const double> x) {
  detail::require(!x.empty(), Errc::insufficient_input, "mean of an empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Unbiased sample variance (divides by N - 1).
inline double variance(std::span<const double> x) {
  detail::require(x.size() >= 2, Errc::insufficient_input, "variance needs at least 2 values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Standard error of the mean, sqrt(var / N).
inline double standard_error(std::span<const double> x) {
  return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

/// Standard error of the sample variance, from the fourth central moment:
/// Var(s^2) ~ (m4 - s^4 (N-3)/(N-1)) / N.
inline double variance_standard_error(std::span<const double> x) {
  detail::require(x.size() >= 4, Errc::insufficient_input, "variance standard error needs at least 4 values");
  const double m = mean(x);
  const double n = static_cast<double>(x.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - m) * (v - m);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  const double s2 = m2 * n / (n - 1.0);
  return std::sqrt(std::max(0.0, (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n));
}

/// Two-sample Kolmogorov-Smirnov statistic sup_t |F_a(t) - F_b(t)|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  detail::require(!a.empty() && !b.empty(), Errc::insufficient_input, "KS needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace vprm::stats
