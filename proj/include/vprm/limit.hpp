#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/profile.hpp"
#include "vprm/rng.hpp"

namespace vprm {

/// Complex Gaussian Z with E Z = 0, E|Z|^2 = 1 and E Z^2 = tau.
///
/// With tau = |tau| e^{i theta}: Z = e^{i theta/2} (a G1 + i b G2),
/// a = sqrt((1+|tau|)/2), b = sqrt((1-|tau|)/2).
inline Complex sample_z(Complex tau, Rng& rng) {
  const double modulus = std::abs(tau);
  detail::require(modulus <= 1.0 + 1e-12, Errc::invalid_argument, "pseudo-variance must satisfy |tau| <= 1");
  const double m = std::min(modulus, 1.0);
  const double a = std::sqrt(0.5 * (1.0 + m));
  const double b = std::sqrt(0.5 * (1.0 - m));
  std::normal_distribution<double> normal;
  const double g1 = normal(rng);
  const double g2 = normal(rng);
  const Complex rotation = std::polar(1.0, 0.5 * std::arg(tau));
  return rotation * Complex(a * g1, b * g2);
}

/// The Gaussian limit g(z) = kappa(z) exp(-F(z)) of det(I - zX), built from
/// tr S^k and the pseudo-moment E W^2, valid on the disk |z| <= 1 - delta.
class LimitObject {
 public:
  LimitObject(std::vector<double> traces, Complex pseudo, double delta = 0.05, double tail_tol = 1e-10)
      : traces_(std::move(traces)), pseudo_(pseudo), delta_(delta), tail_tol_(tail_tol) {
    detail::require(delta > 0.0 && delta < 1.0, Errc::invalid_argument, "delta must lie in (0, 1)");
    detail::require(tail_tol > 0.0, Errc::invalid_argument, "tail tolerance must be positive");
    detail::require(std::abs(pseudo) <= 1.0 + 1e-12, Errc::invalid_argument, "|E W^2| must not exceed 1");
    detail::require(!traces_.empty(), Errc::insufficient_input, "limit object needs at least one trace");
    for (double t : traces_)
      detail::require(std::isfinite(t) && t >= 0.0, Errc::invalid_profile, "traces of S must be finite and >= 0");
  }

  /// Computes as many tr S^k as the tail tolerance needs. Refuses profiles with
  /// some tr S^k above `trace_cap` (no uniform bound, so no limit object).
  static LimitObject from_profile(const VarianceProfile& s, Complex pseudo, double delta = 0.05,
                                  double tail_tol = 1e-10,
                                  double trace_cap = std::numeric_limits<double>::infinity()) {
    int stored = 64;
    for (;;) {
      std::vector<double> traces = trace_powers(s, stored);
      LimitObject limit(std::move(traces), pseudo, delta, tail_tol);
      detail::require(limit.max_trace() <= trace_cap, Errc::invalid_profile,
                      "tr S^k exceeds the trace cap; the profile is outside the limit object's validity range");
      const int need = limit.required_terms();
      if (need <= stored) {
        limit.spectral_bound_ = perron_radius(s).radius;
        return limit;
      }
      stored = need;
    }
  }

  double delta() const noexcept { return delta_; }
  double tail_tol() const noexcept { return tail_tol_; }
  Complex pseudo() const noexcept { return pseudo_; }
  std::span<const double> traces() const noexcept { return traces_; }
  int stored_terms() const noexcept { return static_cast<int>(traces_.size()); }

  double max_trace() const { return *std::max_element(traces_.begin(), traces_.end()); }

  /// Smallest K with max_k tr S^k * sum_{k>K} (1-delta)^{2k}/k <= tail_tol, using
  /// sum_{k>K} x^k/k <= x^{K+1} / ((K+1)(1-x)).
  int required_terms() const {
    const double x = (1.0 - delta_) * (1.0 - delta_);
    const double c = max_trace();
    if (c == 0.0) return 1;
    for (int k = 1; k < 1000000; ++k)
      if (c * std::pow(x, k + 1) / ((k + 1) * (1.0 - x)) <= tail_tol_) return k;
    throw Error(Errc::tail_unsatisfiable, "tail bound cannot be met");
  }

  /// kappa(z) = exp(-1/2 sum_k (z^2 E W^2)^k tr S^k / k), the square root of
  /// det(I - z^2 E W^2 S) with kappa(0) = 1.
  Complex kappa(Complex z) const {
    check_point(z);
    const int terms = checked_terms();
    const Complex u = z * z * pseudo_;
    if (spectral_bound_)
      detail::require(std::abs(u) * *spectral_bound_ < 1.0, Errc::domain_error,
                      "|z^2 E W^2| rho(S) must be below 1");
    Complex sum = 0.0;
    Complex power = 1.0;
    for (int k = 1; k <= terms; ++k) {
      power *= u;
      sum += power * traces_[static_cast<std::size_t>(k - 1)] / static_cast<double>(k);
    }
    return std::exp(-0.5 * sum);
  }

  /// One draw of Z_1..Z_K (E Z_k^2 = (E W^2)^k).
  std::vector<Complex> sample_coefficients(Rng& rng) const {
    const int terms = checked_terms();
    std::vector<Complex> z(static_cast<std::size_t>(terms));
    Complex tau = 1.0;
    for (int k = 1; k <= terms; ++k) {
      tau *= pseudo_;
      z[static_cast<std::size_t>(k - 1)] = sample_z(tau, rng);
    }
    return z;
  }

  /// F(z_j) = sum_k z_j^k Z_k sqrt(tr S^k / k) for one shared draw of the Z_k.
  std::vector<Complex> sample_f(std::span<const Complex> points, Rng& rng) const {
    for (const auto& z : points) check_point(z);
    const std::vector<Complex> coeffs = sample_coefficients(rng);
    std::vector<Complex> out;
    out.reserve(points.size());
    for (const auto& z : points) {
      Complex sum = 0.0;
      Complex power = 1.0;
      for (std::size_t k = 0; k < coeffs.size(); ++k) {
        power *= z;
        sum += power * coeffs[k] * std::sqrt(traces_[k] / static_cast<double>(k + 1));
      }
      out.push_back(sum);
    }
    return out;
  }

  /// g(z_j) = kappa(z_j) exp(-F(z_j)).
  std::vector<Complex> sample_g(std::span<const Complex> points, Rng& rng) const {
    std::vector<Complex> f = sample_f(points, rng);
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = kappa(points[j]) * std::exp(-f[j]);
    return f;
  }

  /// m_l = (E W^2)^{l/2} tr S^{l/2} for even l, 0 for odd l; l = 1..kmax.
  std::vector<Complex> mean_traces(int kmax) const {
    detail::require(kmax >= 1, Errc::invalid_argument, "mean_traces needs kmax >= 1");
    detail::require(kmax <= 2 * stored_terms(), Errc::insufficient_input, "mean_traces needs kmax <= 2K");
    std::vector<Complex> m;
    m.reserve(static_cast<std::size_t>(kmax));
    for (int l = 1; l <= kmax; ++l) {
      if (l % 2 == 1) {
        m.emplace_back(0.0, 0.0);
      } else {
        const int h = l / 2;
        m.push_back(std::pow(pseudo_, h) * traces_[static_cast<std::size_t>(h - 1)]);
      }
    }
    return m;
  }

 private:
  void check_point(Complex z) const {
    detail::require(std::abs(z) <= 1.0 - delta_ + 1e-12, Errc::domain_error,
                    "point lies outside the disk |z| <= 1 - delta");
  }

  int checked_terms() const {
    const int need = required_terms();
    if (need > stored_terms())
      throw Error(Errc::tail_unsatisfiable, "tail bound needs K = " + std::to_string(need) + " traces, only " +
                                                std::to_string(stored_terms()) + " stored");
    return need;
  }

  std::vector<double> traces_;
  Complex pseudo_;
  double delta_;
  double tail_tol_;
  std::optional<double> spectral_bound_;
};

}  // namespace vprm
