#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/profile.hpp"

namespace vprm {

inline constexpr Index kRyserMaxDim = 24;
inline constexpr Index kNaivePermMaxDim = 8;

/// Exact permanent by Ryser's inclusion-exclusion,
///   perm(M) = (-1)^n sum_{S subset [n]} (-1)^{|S|} prod_i sum_{j in S} m_ij,
/// visiting column subsets in Gray-code order so each step adds or removes one
/// column from the running row sums. O(2^n n).
template <typename Derived>
typename Derived::Scalar perm_ryser(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  detail::require(m.rows() == m.cols(), Errc::invalid_dimension, "permanent needs a square matrix");
  const Index n = m.rows();
  detail::require(n <= kRyserMaxDim, Errc::size_limit, "perm_ryser is limited to n <= 24");
  if (n == 0) return Scalar(1);
  std::vector<Scalar> row_sums(static_cast<std::size_t>(n), Scalar(0));
  Scalar total(0);
  const std::uint64_t count = std::uint64_t{1} << n;
  std::uint64_t gray = 0;
  for (std::uint64_t k = 1; k < count; ++k) {
    const int col = std::countr_zero(k);
    const std::uint64_t bit = std::uint64_t{1} << col;
    gray ^= bit;
    const Scalar sign = (gray & bit) ? Scalar(1) : Scalar(-1);
    for (Index i = 0; i < n; ++i) row_sums[static_cast<std::size_t>(i)] += sign * m(i, col);
    Scalar prod(1);
    for (const auto& r : row_sums) prod *= r;
    if (std::popcount(gray) % 2 == 1)
      total -= prod;
    else
      total += prod;
  }
  return (n % 2 == 1) ? -total : total;
}

/// Sum over all n! permutations; a factorial-cost oracle for perm_ryser.
template <typename Derived>
typename Derived::Scalar perm_naive(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  detail::require(m.rows() == m.cols(), Errc::invalid_dimension, "permanent needs a square matrix");
  const Index n = m.rows();
  detail::require(n <= kNaivePermMaxDim, Errc::size_limit, "perm_naive is limited to n <= 8");
  std::vector<Index> sigma(static_cast<std::size_t>(n));
  std::iota(sigma.begin(), sigma.end(), Index{0});
  Scalar total(0);
  do {
    Scalar prod(1);
    for (Index i = 0; i < n; ++i) prod *= m(i, sigma[static_cast<std::size_t>(i)]);
    total += prod;
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return total;
}

/// p(w) = perm(I + wS) = 1 + sum_k p_k w^k with p_k the sum of the permanents
/// of the k x k principal submatrices of S.
struct PermPolyCoeffs {
  std::vector<double> p;  // p_1 .. p_kmax

  double operator()(double w) const {
    double sum = 1.0, power = 1.0;
    for (double c : p) {
      power *= w;
      sum += c * power;
    }
    return sum;
  }
};

/// Enumerates principal submatrices: all subsets for n <= 14, or explicit
/// k-subset loops up to k = 3 for n <= 60.
inline PermPolyCoeffs perm_poly_coeffs(const Matrix& s, int kmax) {
  detail::require(s.rows() == s.cols(), Errc::invalid_dimension, "perm_poly_coeffs needs a square matrix");
  detail::require(kmax >= 1, Errc::invalid_argument, "perm_poly_coeffs needs kmax >= 1");
  const Index n = s.rows();
  PermPolyCoeffs out;
  out.p.assign(static_cast<std::size_t>(kmax), 0.0);
  if (n <= 14) {
    std::vector<Index> idx;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      const int k = std::popcount(mask);
      if (k > kmax) continue;
      idx.clear();
      for (Index i = 0; i < n; ++i)
        if (mask & (1u << i)) idx.push_back(i);
      Matrix sub(k, k);
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) sub(a, b) = s(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      out.p[static_cast<std::size_t>(k - 1)] += perm_ryser(sub);
    }
    return out;
  }
  detail::require(kmax <= 3 && n <= 60, Errc::size_limit,
                  "perm_poly_coeffs needs n <= 14, or kmax <= 3 with n <= 60");
  for (Index i = 0; i < n; ++i) {
    out.p[0] += s(i, i);
    if (kmax < 2) continue;
    for (Index j = i + 1; j < n; ++j) {
      out.p[1] += s(i, i) * s(j, j) + s(i, j) * s(j, i);
      if (kmax < 3) continue;
      for (Index k = j + 1; k < n; ++k) {
        Matrix sub(3, 3);
        const Index id[3] = {i, j, k};
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) sub(a, b) = s(id[a], id[b]);
        out.p[2] += perm_naive(sub);
      }
    }
  }
  return out;
}

inline PermPolyCoeffs perm_poly_coeffs(const VarianceProfile& s, int kmax) {
  return perm_poly_coeffs(s.to_dense(), kmax);
}

/// E|det(I - zX)|^2 = perm(I + |z|^2 S), exact for any centred noise with E|W|^2 = 1.
inline double second_moment_oracle(const Matrix& s, Complex z) {
  detail::require(s.rows() == s.cols(), Errc::invalid_dimension, "second_moment_oracle needs a square matrix");
  const Matrix m = Matrix::Identity(s.rows(), s.cols()) + std::norm(z) * s;
  return perm_ryser(m);
}

inline double second_moment_oracle(const VarianceProfile& s, Complex z) {
  detail::require(s.size() <= kRyserMaxDim, Errc::size_limit, "second_moment_oracle is limited to n <= 24");
  return second_moment_oracle(s.to_dense(), z);
}

}  // namespace vprm
