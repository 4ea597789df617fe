#pragma once

#include <bit>
#include <cmath>
#include <span>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/lapack.hpp"

namespace vprm {

/// Coefficients of q(z) = det(I - zX) = 1 + sum_k (-z)^k P_k.
struct CharPolyCoeffs {
  enum class Source { traces, bruteforce };

  std::vector<Complex> coeffs;  // P_1 .. P_kmax
  Source source = Source::traces;

  int kmax() const { return static_cast<int>(coeffs.size()); }

  Complex evaluate(Complex z) const {
    Complex sum = 1.0;
    Complex power = 1.0;
    for (const auto& p : coeffs) {
      power *= -z;
      sum += power * p;
    }
    return sum;
  }
};

/// Below this size Eigen's LU is used; above it LAPACK's blocked getrf.
inline constexpr Index kLapackLuMinDim = 128;

/// q(z) = det(I - zX) by partial-pivoting LU. Real X with real z stays real.
template <typename Derived>
Complex eval_det(const Eigen::MatrixBase<Derived>& x, Complex z) {
  using Scalar = typename Derived::Scalar;
  detail::require(x.rows() == x.cols(), Errc::invalid_dimension, "eval_det needs a square matrix");
  const Index n = x.rows();
  if (n == 0) return 1.0;
  if constexpr (std::is_same_v<Scalar, double>) {
    if (z.imag() == 0.0) {
      Matrix a = -z.real() * x;
      a.diagonal().array() += 1.0;
      return n >= kLapackLuMinDim ? detail::getrf_determinant(a) : Eigen::PartialPivLU<Matrix>(a).determinant();
    }
  }
  CMatrix a = -z * x.template cast<Complex>();
  a.diagonal().array() += 1.0;
  return n >= kLapackLuMinDim ? detail::getrf_determinant(a) : Eigen::PartialPivLU<CMatrix>(a).determinant();
}

/// Upper-Hessenberg matrix unitarily similar to X; det(I - zH) = det(I - zX).
/// Row-major, since evaluation walks H row by row.
template <typename Scalar>
struct HessenbergForm {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> h;
};

template <typename Derived>
HessenbergForm<typename Derived::Scalar> hessenberg_reduce(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require(x.rows() == x.cols(), Errc::invalid_dimension, "hessenberg_reduce needs a square matrix");
  const Index n = x.rows();
  bool already = true;
  for (Index j = 0; j < n && already; ++j)
    for (Index i = j + 2; i < n; ++i)
      if (x(i, j) != Scalar(0)) {
        already = false;
        break;
      }
  if (already || n < 3) return {Dense(x)};
  Dense h(x);
  detail::require(detail::gehrd_inplace(h) == 0, Errc::numerical_failure, "LAPACK gehrd failed");
  return {h};
}

/// det(I - zH) for upper-Hessenberg H in O(n^2): Gaussian elimination where
/// only adjacent rows can be exchanged. Only the carried pivot row and the next
/// row of I - zH are live at any step.
template <typename Scalar>
Complex eval_det_hessenberg(const HessenbergForm<Scalar>& form, Complex z) {
  const auto& h = form.h;
  const Index n = h.rows();
  if (n == 0) return 1.0;
  std::vector<Complex> carry(static_cast<std::size_t>(n)), next(static_cast<std::size_t>(n));
  const double zr = z.real(), zi = z.imag();
  // Products are spelled out in real arithmetic: std::complex multiplication
  // carries NaN-recovery calls that block vectorization.
  // Row i of -zH from column `from` on.
  const auto load = [&](std::vector<Complex>& row, Index i, Index from) {
    for (Index j = from; j < n; ++j) {
      const Complex v(h(i, j));
      row[static_cast<std::size_t>(j)] = Complex(zi * v.imag() - zr * v.real(), -(zr * v.imag() + zi * v.real()));
    }
  };
  load(carry, 0, 0);
  carry[0] += 1.0;
  Complex det = 1.0;
  for (Index k = 0; k + 1 < n; ++k) {
    load(next, k + 1, k);
    next[static_cast<std::size_t>(k + 1)] += 1.0;
    const auto kk = static_cast<std::size_t>(k);
    if (std::abs(next[kk]) > std::abs(carry[kk])) {
      carry.swap(next);
      det = -det;
    }
    const Complex pivot = carry[kk];
    det *= pivot;
    if (pivot == Complex(0.0, 0.0)) return 0.0;
    const Complex m = next[kk] / pivot;
    if (m != Complex(0.0, 0.0)) {
      const double mr = m.real(), mi = m.imag();
      for (std::size_t j = kk + 1; j < static_cast<std::size_t>(n); ++j) {
        const double cr = carry[j].real(), ci = carry[j].imag();
        next[j] = Complex(next[j].real() - (mr * cr - mi * ci), next[j].imag() - (mr * ci + mi * cr));
      }
    }
    carry.swap(next);
  }
  return det * carry[static_cast<std::size_t>(n - 1)];
}

/// tr X^k, k = 1..kmax, from accumulated products (exact for defective X too).
template <typename Derived>
std::vector<Complex> trace_powers_x(const Eigen::MatrixBase<Derived>& x, int kmax) {
  using Scalar = typename Derived::Scalar;
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  detail::require(kmax >= 1, Errc::invalid_argument, "trace_powers_x needs kmax >= 1");
  detail::require(x.rows() == x.cols(), Errc::invalid_dimension, "trace_powers_x needs a square matrix");
  std::vector<Complex> out;
  out.reserve(static_cast<std::size_t>(kmax));
  const Dense base(x);
  Dense power = base;
  Dense next(base.rows(), base.cols());
  for (int k = 1; k <= kmax; ++k) {
    if (k > 1) {
      next.noalias() = power * base;
      power.swap(next);
    }
    out.emplace_back(power.trace());
  }
  return out;
}

/// P_1..P_kmax from power sums t_k = tr X^k via the Newton-type recursion
///   k P_k = t_1 P_{k-1} - t_2 P_{k-2} + ... + (-1)^{k-1} t_k P_0,  P_0 = 1,
/// which matches coefficients of 1 + sum (-z)^k P_k = exp(-sum t_k z^k / k).
inline CharPolyCoeffs coeffs_from_traces(std::span<const Complex> traces, int kmax) {
  detail::require(kmax >= 1, Errc::invalid_argument, "coeffs_from_traces needs kmax >= 1");
  detail::require(static_cast<std::size_t>(kmax) <= traces.size(), Errc::insufficient_input,
                  "need at least kmax traces");
  std::vector<Complex> p(static_cast<std::size_t>(kmax) + 1);
  p[0] = 1.0;
  for (int k = 1; k <= kmax; ++k) {
    Complex acc = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= k; ++j) {
      acc += sign * traces[static_cast<std::size_t>(j - 1)] * p[static_cast<std::size_t>(k - j)];
      sign = -sign;
    }
    p[static_cast<std::size_t>(k)] = acc / static_cast<double>(k);
  }
  return {std::vector<Complex>(p.begin() + 1, p.end()), CharPolyCoeffs::Source::traces};
}

/// Maximum dimension accepted by the subset-enumeration oracle.
inline constexpr Index kBruteforceMaxDim = 14;

/// P_k = sum over |I| = k of det X_I, by enumerating all 2^n principal minors.
template <typename Derived>
CharPolyCoeffs coeffs_bruteforce(const Eigen::MatrixBase<Derived>& x, int kmax) {
  detail::require(x.rows() == x.cols(), Errc::invalid_dimension, "coeffs_bruteforce needs a square matrix");
  const Index n = x.rows();
  detail::require(n <= kBruteforceMaxDim, Errc::size_limit, "coeffs_bruteforce is limited to n <= 14");
  detail::require(kmax >= 1, Errc::invalid_argument, "coeffs_bruteforce needs kmax >= 1");
  const CMatrix xc = x.template cast<Complex>();
  std::vector<Complex> p(static_cast<std::size_t>(kmax), Complex(0.0, 0.0));
  std::vector<Index> idx;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    const int k = std::popcount(mask);
    if (k > kmax) continue;
    idx.clear();
    for (Index i = 0; i < n; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    CMatrix sub(k, k);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) sub(a, b) = xc(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    p[static_cast<std::size_t>(k - 1)] += Eigen::PartialPivLU<CMatrix>(sub).determinant();
  }
  return {std::move(p), CharPolyCoeffs::Source::bruteforce};
}

}  // namespace vprm
