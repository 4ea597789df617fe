#pragma once

// Thin bindings to the Fortran LAPACK/BLAS routines used by the spectra module.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <type_traits>
#include <vector>

#include "vprm/core.hpp"

extern "C" {
void dgeev_(const char* jobvl, const char* jobvr, const int* n, double* a, const int* lda, double* wr,
            double* wi, double* vl, const int* ldvl, double* vr, const int* ldvr, double* work,
            const int* lwork, int* info);
void zgeev_(const char* jobvl, const char* jobvr, const int* n, std::complex<double>* a, const int* lda,
            std::complex<double>* w, std::complex<double>* vl, const int* ldvl, std::complex<double>* vr,
            const int* ldvr, std::complex<double>* work, const int* lwork, double* rwork, int* info);
void dgehrd_(const int* n, const int* ilo, const int* ihi, double* a, const int* lda, double* tau, double* work,
             const int* lwork, int* info);
void zgehrd_(const int* n, const int* ilo, const int* ihi, std::complex<double>* a, const int* lda,
             std::complex<double>* tau, std::complex<double>* work, const int* lwork, int* info);
void dgetrf_(const int* m, const int* n, double* a, const int* lda, int* ipiv, int* info);
void zgetrf_(const int* m, const int* n, std::complex<double>* a, const int* lda, int* ipiv, int* info);
void dgemm_(const char* transa, const char* transb, const int* m, const int* n, const int* k,
            const double* alpha, const double* a, const int* lda, const double* b, const int* ldb,
            const double* beta, double* c, const int* ldc);
}

namespace vprm::detail {

// Some OpenBLAS builds pick a kernel for recent Xeons whose dgemm is wrong;
// every LAPACK path goes through this check once and refuses to run on a bad BLAS.
inline void verify_blas_once() {
  static std::once_flag once;
  static bool healthy = true;
  std::call_once(once, [] {
    const int n = 192;
    std::vector<double> a(n * n), b(n * n), c(n * n, 0.0), ref(n * n, 0.0);
    for (int i = 0; i < n * n; ++i) {
      a[i] = std::sin(0.37 * i + 1.0);
      b[i] = std::cos(0.11 * i - 2.0);
    }
    const double one = 1.0, zero = 0.0;
    dgemm_("N", "N", &n, &n, &n, &one, a.data(), &n, b.data(), &n, &zero, c.data(), &n);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i) ref[j * n + i] += a[k * n + i] * b[j * n + k];
    for (int i = 0; i < n * n; ++i)
      if (std::abs(c[i] - ref[i]) > 1e-9 * (1.0 + std::abs(ref[i]))) healthy = false;
  });
  require(healthy, Errc::numerical_failure,
          "BLAS self-check failed (dgemm result is wrong); with OpenBLAS set "
          "OPENBLAS_CORETYPE=Haswell (or another core type supported by this CPU)");
}

// Eigenvalues only; returns LAPACK's info (0 on success, >0 = QR failed to converge).
inline int geev_eigenvalues(Matrix a, std::vector<Complex>& out) {
  verify_blas_once();
  const int n = static_cast<int>(a.rows());
  std::vector<double> wr(n), wi(n);
  const int one = 1;
  int info = 0;
  int lwork = -1;
  double query = 0.0;
  dgeev_("N", "N", &n, a.data(), &n, wr.data(), wi.data(), nullptr, &one, nullptr, &one, &query, &lwork, &info);
  lwork = static_cast<int>(query);
  std::vector<double> work(std::max(lwork, 1));
  dgeev_("N", "N", &n, a.data(), &n, wr.data(), wi.data(), nullptr, &one, nullptr, &one, work.data(), &lwork,
         &info);
  out.clear();
  // On failure only entries info..n-1 (0-based) hold converged eigenvalues.
  for (int i = (info > 0 ? info : 0); i < n; ++i) out.emplace_back(wr[i], wi[i]);
  return info;
}

inline int geev_eigenvalues(CMatrix a, std::vector<Complex>& out) {
  verify_blas_once();
  const int n = static_cast<int>(a.rows());
  std::vector<Complex> w(n);
  std::vector<double> rwork(2 * std::max(n, 1));
  const int one = 1;
  int info = 0;
  int lwork = -1;
  Complex query;
  zgeev_("N", "N", &n, a.data(), &n, w.data(), nullptr, &one, nullptr, &one, &query, &lwork, rwork.data(), &info);
  lwork = static_cast<int>(query.real());
  std::vector<Complex> work(std::max(lwork, 1));
  zgeev_("N", "N", &n, a.data(), &n, w.data(), nullptr, &one, nullptr, &one, work.data(), &lwork, rwork.data(),
         &info);
  out.assign(w.begin() + (info > 0 ? info : 0), w.end());
  return info;
}

// Overwrites `a` with an upper-Hessenberg matrix unitarily similar to it
// (entries below the subdiagonal are zeroed); returns LAPACK's info.
template <typename Scalar>
int gehrd_inplace(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a) {
  verify_blas_once();
  const int n = static_cast<int>(a.rows());
  const int ilo = 1;
  int info = 0;
  int lwork = -1;
  std::vector<Scalar> tau(std::max(n - 1, 1));
  Scalar query{};
  if constexpr (std::is_same_v<Scalar, double>) {
    dgehrd_(&n, &ilo, &n, a.data(), &n, tau.data(), &query, &lwork, &info);
  } else {
    zgehrd_(&n, &ilo, &n, a.data(), &n, tau.data(), &query, &lwork, &info);
  }
  lwork = std::max(1, static_cast<int>(std::real(query)));
  std::vector<Scalar> work(static_cast<std::size_t>(lwork));
  if constexpr (std::is_same_v<Scalar, double>) {
    dgehrd_(&n, &ilo, &n, a.data(), &n, tau.data(), work.data(), &lwork, &info);
  } else {
    zgehrd_(&n, &ilo, &n, a.data(), &n, tau.data(), work.data(), &lwork, &info);
  }
  for (int j = 0; j < n; ++j)
    for (int i = j + 2; i < n; ++i) a(i, j) = Scalar(0);
  return info;
}

// Determinant of `a` from LAPACK's blocked partial-pivoting LU; `a` is overwritten.
template <typename Scalar>
Scalar getrf_determinant(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a) {
  verify_blas_once();
  const int n = static_cast<int>(a.rows());
  std::vector<int> ipiv(static_cast<std::size_t>(std::max(n, 1)));
  int info = 0;
  if constexpr (std::is_same_v<Scalar, double>) {
    dgetrf_(&n, &n, a.data(), &n, ipiv.data(), &info);
  } else {
    zgetrf_(&n, &n, a.data(), &n, ipiv.data(), &info);
  }
  // info > 0 marks an exactly zero pivot; the product below is then 0 as well.
  require(info >= 0, Errc::numerical_failure, "LAPACK getrf rejected its arguments");
  Scalar det(1);
  for (int i = 0; i < n; ++i) {
    det *= a(i, i);
    if (ipiv[static_cast<std::size_t>(i)] != i + 1) det = -det;
  }
  return det;
}

}  // namespace vprm::detail
