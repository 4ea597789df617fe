#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/lapack.hpp"

namespace vprm {

struct Spectrum {
  std::vector<Complex> eigenvalues;
  double radius = 0.0;
  bool converged = true;
};

/// All eigenvalues of a dense square matrix (Hessenberg reduction followed by
/// shifted QR with deflation, via LAPACK). Real input stays in real arithmetic.
///
/// When the QR iteration hits its cap the spectrum holds only the eigenvalues
/// that did converge and `converged` is false.
template <typename Derived>
Spectrum eigenvalues_dense(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require(x.rows() == x.cols(), Errc::invalid_dimension, "eigenvalues_dense needs a square matrix");
  detail::require(x.rows() >= 1, Errc::invalid_dimension, "eigenvalues_dense needs n >= 1");
  Spectrum out;
  int info = 0;
  if constexpr (std::is_same_v<Scalar, double>) {
    info = detail::geev_eigenvalues(Matrix(x), out.eigenvalues);
  } else {
    info = detail::geev_eigenvalues(CMatrix(x.template cast<Complex>()), out.eigenvalues);
  }
  out.converged = info == 0;
  detail::require(info >= 0, Errc::numerical_failure, "LAPACK geev rejected its arguments");
  for (const auto& l : out.eigenvalues) out.radius = std::max(out.radius, std::abs(l));
  return out;
}

/// Largest eigenvalue modulus. Throws numerical_failure if the QR iteration
/// did not converge.
template <typename Derived>
double spectral_radius(const Eigen::MatrixBase<Derived>& x) {
  const Spectrum s = eigenvalues_dense(x);
  detail::require(s.converged, Errc::numerical_failure, "eigenvalue iteration did not converge");
  return s.radius;
}

/// Minimum of |q| over a polar grid of the closed disk of radius `r`: radii
/// r*i/(radii-1), i = 0..radii-1, and `angles` equispaced angles. A zero of q
/// inside the disk shows up as a small minimum, up to grid resolution.
template <typename Evaluator>
double min_modulus_on_disk(Evaluator&& q, double r, int radii = 64, int angles = 256) {
  detail::require(r > 0.0 && r < 1.0, Errc::domain_error, "min_modulus_on_disk needs 0 < r < 1");
  detail::require(radii >= 2 && angles >= 1, Errc::invalid_argument, "grid needs >= 2 radii and >= 1 angle");
  double best = std::abs(Complex(q(Complex(0.0, 0.0))));
  for (int i = 1; i < radii; ++i) {
    const double rad = r * static_cast<double>(i) / static_cast<double>(radii - 1);
    for (int j = 0; j < angles; ++j) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(angles);
      best = std::min(best, std::abs(Complex(q(std::polar(rad, theta)))));
    }
  }
  return best;
}

/// CSV export: header `re,im`, one row per eigenvalue, then a `# radius=..,converged=..` line.
inline void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
  const auto old = os.precision(17);
  os << "re,im\n";
  for (const auto& l : s.eigenvalues) os << l.real() << ',' << l.imag() << '\n';
  os << "# radius=" << s.radius << ",converged=" << (s.converged ? 1 : 0) << '\n';
  os.precision(old);
}

}  // namespace vprm
