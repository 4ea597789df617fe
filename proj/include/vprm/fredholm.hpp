#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/kernel.hpp"
#include "vprm/permanent.hpp"
#include "vprm/profile.hpp"
#include "vprm/rng.hpp"

namespace vprm {

inline constexpr Index kMinQuadrature = 16;

namespace detail {

inline void require_quadrature(Index n_quad) {
  require(n_quad >= kMinQuadrature, Errc::invalid_argument, "quadrature needs n_quad >= 16");
}

}  // namespace detail

/// tr S^k of the n_quad-point Nystrom discretization s_ij = S(i/n, j/n)/n.
inline std::vector<double> kernel_trace_powers(const KernelSpec& kernel, int kmax, Index n_quad) {
  detail::require_quadrature(n_quad);
  return trace_powers(build_sampled_kernel(kernel, n_quad), kmax);
}

/// det(I - gamma S^(n_quad)); tends to the Fredholm determinant det(I - gamma S) as n_quad grows.
inline double fredholm_det(const KernelSpec& kernel, double gamma, Index n_quad) {
  detail::require(gamma >= 0.0 && std::isfinite(gamma), Errc::invalid_argument, "gamma must be >= 0");
  detail::require_quadrature(n_quad);
  return det_one_minus_gamma(build_sampled_kernel(kernel, n_quad), gamma);
}

/// Sum over k > kmax of gamma^k k^{k/2} sup|S|^k / k!, the Hadamard bound on the
/// series remainder.
inline double hadamard_tail(double gamma, double sup_norm, int kmax) {
  const double a = gamma * sup_norm;
  if (a == 0.0) return 0.0;
  double sum = 0.0;
  for (int k = kmax + 1; k < kmax + 100000; ++k) {
    const double kd = static_cast<double>(k);
    const double log_term = kd * std::log(a) + 0.5 * kd * std::log(kd) - std::lgamma(kd + 1.0);
    const double term = std::exp(log_term);
    sum += term;
    // terms decrease once sqrt(k) exceeds e*a; stop when negligible
    if (std::sqrt(kd) > std::exp(1.0) * a && term <= 1e-17 * sum) break;
  }
  return sum;
}

struct FredholmSeries {
  double value = 1.0;       // 1 + sum_{k<=kmax} (-gamma)^k d_k
  double mc_error = 0.0;    // standard error of the Monte Carlo estimate
  double tail_bound = 0.0;  // Hadamard bound on the omitted terms
  std::vector<double> d;     // d_1 .. d_kmax
  std::vector<double> d_se;  // their standard errors
};

/// det(I - gamma S) = 1 + sum_k (-gamma)^k d_k with
/// d_k = (1/k!) int_{[0,1]^k} det[S(x_a, x_b)] dx, each d_k estimated from
/// `mc_samples` uniform points. Throws tail_unsatisfiable when `precision` is
/// given and the Hadamard tail at kmax exceeds it.
inline FredholmSeries fredholm_series(const KernelSpec& kernel, double gamma, int kmax, Index mc_samples, Rng& rng,
                                      std::optional<double> precision = std::nullopt) {
  detail::require(gamma >= 0.0 && std::isfinite(gamma), Errc::invalid_argument, "gamma must be >= 0");
  detail::require(kmax >= 1, Errc::invalid_argument, "fredholm_series needs kmax >= 1");
  detail::require(mc_samples >= 2, Errc::invalid_argument, "fredholm_series needs at least 2 samples");
  FredholmSeries out;
  out.tail_bound = hadamard_tail(gamma, kernel.sup_norm(), kmax);
  if (precision && out.tail_bound > *precision)
    throw Error(Errc::tail_unsatisfiable,
                "Hadamard tail bound " + std::to_string(out.tail_bound) + " exceeds requested precision at kmax = " +
                    std::to_string(kmax));
  double variance = 0.0;
  double power = 1.0;
  std::vector<double> x;
  for (int k = 1; k <= kmax; ++k) {
    power *= -gamma;
    const double inv_factorial = std::exp(-std::lgamma(k + 1.0));
    x.resize(static_cast<std::size_t>(k));
    Matrix m(k, k);
    double sum = 0.0, sum_sq = 0.0;
    for (Index s = 0; s < mc_samples; ++s) {
      for (auto& xi : x) xi = detail::uniform01(rng);
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) m(a, b) = kernel(x[static_cast<std::size_t>(a)], x[static_cast<std::size_t>(b)]);
      const double v = k == 1 ? m(0, 0) : m.partialPivLu().determinant();
      sum += v;
      sum_sq += v * v;
    }
    const double n = static_cast<double>(mc_samples);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    const double dk = mean * inv_factorial;
    const double se = std::sqrt(var / n) * inv_factorial;
    out.d.push_back(dk);
    out.d_se.push_back(se);
    out.value += power * dk;
    variance += power * power * se * se;
  }
  out.mc_error = std::sqrt(variance);
  return out;
}

/// Perron root of the discretized operator.
inline double kernel_radius(const KernelSpec& kernel, Index n_quad) {
  detail::require_quadrature(n_quad);
  const PerronEstimate est = perron_radius(build_sampled_kernel(kernel, n_quad));
  detail::require(est.converged, Errc::numerical_failure, "kernel radius iteration did not converge");
  return est.radius;
}

/// Rescales so the discretized operator has radius 1. A kernel with radius 0 is
/// instead multiplied by `constant`, which must then be supplied.
inline KernelSpec normalize(const KernelSpec& kernel, Index n_quad, std::optional<double> constant = std::nullopt) {
  const double rho = kernel_radius(kernel, n_quad);
  if (rho > 0.0) return kernel.scaled(1.0 / rho);
  detail::require(constant.has_value(), Errc::needs_constant, "kernel has radius 0; supply a scaling constant");
  detail::require(*constant > 0.0 && std::isfinite(*constant), Errc::invalid_argument, "scaling constant must be > 0");
  return kernel.scaled(*constant);
}

namespace detail {

// (1/k!) * mean over all n_quad^k node tuples of f(k x k kernel matrix), nodes i/n_quad.
template <typename F>
std::vector<double> tuple_quadrature(const KernelSpec& kernel, int kmax, Index n_quad, F&& f) {
  require(kmax >= 1, Errc::invalid_argument, "tuple quadrature needs kmax >= 1");
  require(n_quad >= 1, Errc::invalid_argument, "tuple quadrature needs n_quad >= 1");
  require(std::pow(static_cast<double>(n_quad), kmax) <= 1e7, Errc::size_limit,
          "tuple quadrature limited to n_quad^kmax <= 1e7");
  std::vector<double> out;
  for (int k = 1; k <= kmax; ++k) {
    std::vector<Index> idx(static_cast<std::size_t>(k), 0);
    Matrix m(k, k);
    double sum = 0.0;
    for (;;) {
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
          m(a, b) = kernel(kernel_node(idx[static_cast<std::size_t>(a)], n_quad),
                           kernel_node(idx[static_cast<std::size_t>(b)], n_quad));
      sum += f(m);
      int pos = k - 1;
      while (pos >= 0 && ++idx[static_cast<std::size_t>(pos)] == n_quad) idx[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
    out.push_back(sum / std::pow(static_cast<double>(n_quad), k) * std::exp(-std::lgamma(k + 1.0)));
  }
  return out;
}

}  // namespace detail

/// p_k = (1/k!) int perm[S(x_a, x_b)] dx by tensor quadrature; exact for a step
/// kernel of an n x n matrix when n_quad = n.
inline std::vector<double> fredholm_permanent_coeffs(const KernelSpec& kernel, int kmax, Index n_quad) {
  return detail::tuple_quadrature(kernel, kmax, n_quad, [](const Matrix& m) { return perm_ryser(m); });
}

/// d_k = (1/k!) int det[S(x_a, x_b)] dx by tensor quadrature.
inline std::vector<double> fredholm_det_coeffs(const KernelSpec& kernel, int kmax, Index n_quad) {
  return detail::tuple_quadrature(kernel, kmax, n_quad,
                                  [](const Matrix& m) { return m.rows() == 1 ? m(0, 0) : m.partialPivLu().determinant(); });
}

struct FredholmRow {
  double gamma = 0.0;
  double det = 1.0;
  double bound = 0.0;
};

/// det(I - gamma S^(n_quad)) on a gamma grid. `bound` is |det(n_quad) - det(n_quad/2)|,
/// an estimate of the first-order discretization error.
inline std::vector<FredholmRow> fredholm_scan(const KernelSpec& kernel, const std::vector<double>& gammas,
                                              Index n_quad) {
  detail::require(n_quad / 2 >= kMinQuadrature, Errc::invalid_argument, "fredholm_scan needs n_quad >= 32");
  const VarianceProfile fine = build_sampled_kernel(kernel, n_quad);
  const VarianceProfile coarse = build_sampled_kernel(kernel, n_quad / 2);
  std::vector<FredholmRow> rows;
  rows.reserve(gammas.size());
  for (double g : gammas) {
    detail::require(g >= 0.0 && std::isfinite(g), Errc::invalid_argument, "gamma must be >= 0");
    const double d = det_one_minus_gamma(fine, g);
    rows.push_back({g, d, std::abs(d - det_one_minus_gamma(coarse, g))});
  }
  return rows;
}

inline void write_fredholm_csv(std::ostream& os, const std::vector<FredholmRow>& rows) {
  const auto old = os.precision(17);
  os << "gamma,det,bound\n";
  for (const auto& r : rows) os << r.gamma << ',' << r.det << ',' << r.bound << '\n';
  os.precision(old);
}

}  // namespace vprm
