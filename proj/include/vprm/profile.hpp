#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/SparseLU>

#include "vprm/core.hpp"
#include "vprm/kernel.hpp"
#include "vprm/rng.hpp"
#include "vprm/spectra.hpp"

namespace vprm {

enum class Provenance { iid, block, kernel, er_sparse, fixed_outdeg, custom };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::iid: return "iid";
    case Provenance::block: return "block";
    case Provenance::kernel: return "kernel";
    case Provenance::er_sparse: return "er_sparse";
    case Provenance::fixed_outdeg: return "fixed_outdeg";
    case Provenance::custom: return "custom";
  }
  return "custom";
}

inline Provenance parse_provenance(const std::string& name) {
  for (auto p : {Provenance::iid, Provenance::block, Provenance::kernel, Provenance::er_sparse,
                 Provenance::fixed_outdeg, Provenance::custom})
    if (name == provenance_name(p)) return p;
  throw Error(Errc::parse_error, "unknown profile provenance '" + name + "'");
}

/// Coordinate storage is used below this fraction of nonzero entries.
inline constexpr double kSparseDensityThreshold = 0.25;

/// The non-negative n x n matrix of entry variances, with the scale K_n that
/// bounds K_n * max s_ij. Immutable once built.
class VarianceProfile {
 public:
  enum class Storage { automatic, dense, sparse };

  static VarianceProfile from_dense(Matrix s, double k_scale, Provenance provenance = Provenance::custom,
                                    Storage storage = Storage::automatic) {
    detail::require(s.rows() == s.cols(), Errc::invalid_dimension, "variance profile must be square");
    detail::require(s.rows() >= 1, Errc::invalid_dimension, "variance profile needs n >= 1");
    detail::require(s.allFinite(), Errc::invalid_profile, "variance profile has non-finite entries");
    detail::require((s.array() >= 0.0).all(), Errc::invalid_profile, "variance profile has negative entries");
    if (storage == Storage::automatic) {
      const auto nnz = (s.array() != 0.0).count();
      storage = density(nnz, s.rows()) < kSparseDensityThreshold ? Storage::sparse : Storage::dense;
    }
    VarianceProfile p(s.rows(), k_scale, provenance);
    if (storage == Storage::sparse) {
      p.storage_ = SparseMatrix(s.sparseView(1.0, 0.0));
    } else {
      p.storage_ = std::move(s);
    }
    return p;
  }

  static VarianceProfile from_sparse(SparseMatrix s, double k_scale, Provenance provenance = Provenance::custom,
                                     Storage storage = Storage::automatic) {
    detail::require(s.rows() == s.cols(), Errc::invalid_dimension, "variance profile must be square");
    detail::require(s.rows() >= 1, Errc::invalid_dimension, "variance profile needs n >= 1");
    s.makeCompressed();
    for (Index k = 0; k < s.nonZeros(); ++k) {
      const double v = s.valuePtr()[k];
      detail::require(std::isfinite(v), Errc::invalid_profile, "variance profile has non-finite entries");
      detail::require(v >= 0.0, Errc::invalid_profile, "variance profile has negative entries");
    }
    if (storage == Storage::automatic)
      storage = density(s.nonZeros(), s.rows()) < kSparseDensityThreshold ? Storage::sparse : Storage::dense;
    if (storage == Storage::dense) return from_dense(Matrix(s), k_scale, provenance, Storage::dense);
    VarianceProfile p(s.rows(), k_scale, provenance);
    p.storage_ = std::move(s);
    return p;
  }

  Index size() const noexcept { return n_; }
  double k_scale() const noexcept { return k_scale_; }
  Provenance provenance() const noexcept { return provenance_; }
  bool is_sparse() const noexcept { return std::holds_alternative<SparseMatrix>(storage_); }

  double operator()(Index i, Index j) const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) return (*d)(i, j);
    return std::get<SparseMatrix>(storage_).coeff(i, j);
  }

  const Matrix& dense_storage() const { return std::get<Matrix>(storage_); }
  const SparseMatrix& sparse_storage() const { return std::get<SparseMatrix>(storage_); }

  Matrix to_dense() const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) return *d;
    return Matrix(std::get<SparseMatrix>(storage_));
  }

  SparseMatrix to_sparse() const {
    if (const auto* s = std::get_if<SparseMatrix>(&storage_)) return *s;
    return SparseMatrix(std::get<Matrix>(storage_).sparseView(1.0, 0.0));
  }

  VarianceProfile with_storage(Storage storage) const {
    if (storage == Storage::sparse) return from_sparse(to_sparse(), k_scale_, provenance_, Storage::sparse);
    return from_dense(to_dense(), k_scale_, provenance_, storage);
  }

  /// Visits the nonzero entries in row-major order as f(i, j, s_ij).
  template <typename F>
  void for_each_nonzero(F&& f) const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) {
      for (Index i = 0; i < n_; ++i)
        for (Index j = 0; j < n_; ++j)
          if (const double v = (*d)(i, j); v != 0.0) f(i, j, v);
      return;
    }
    const auto& s = std::get<SparseMatrix>(storage_);
    for (Index i = 0; i < n_; ++i)
      for (SparseMatrix::InnerIterator it(s, i); it; ++it)
        if (it.value() != 0.0) f(i, it.col(), it.value());
  }

  Index nonzeros() const {
    Index count = 0;
    for_each_nonzero([&](Index, Index, double) { ++count; });
    return count;
  }

  Vector row_sums() const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) return d->rowwise().sum();
    return std::get<SparseMatrix>(storage_) * Vector::Ones(n_);
  }

  Vector col_sums() const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) return d->colwise().sum().transpose();
    return std::get<SparseMatrix>(storage_).transpose() * Vector::Ones(n_);
  }

  double max_entry() const {
    if (const auto* d = std::get_if<Matrix>(&storage_)) return d->maxCoeff();
    const auto& s = std::get<SparseMatrix>(storage_);
    double m = 0.0;
    for (Index k = 0; k < s.nonZeros(); ++k) m = std::max(m, s.valuePtr()[k]);
    return m;
  }

  /// Calls f(matrix) with the underlying Eigen dense or sparse matrix.
  template <typename F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), storage_);
  }

 private:
  VarianceProfile(Index n, double k_scale, Provenance provenance)
      : n_(n), k_scale_(k_scale), provenance_(provenance) {
    detail::require(k_scale > 0.0 && std::isfinite(k_scale), Errc::invalid_profile, "k_scale must be positive");
  }

  static double density(Index nnz, Index n) {
    return static_cast<double>(nnz) / (static_cast<double>(n) * static_cast<double>(n));
  }

  Index n_ = 0;
  double k_scale_ = 1.0;
  Provenance provenance_ = Provenance::custom;
  std::variant<Matrix, SparseMatrix> storage_;
};

// ---------------------------------------------------------------------------
// Spectral helpers

struct PerronEstimate {
  double radius = 0.0;
  bool converged = false;
  int iterations = 0;
  bool used_fallback = false;
};

namespace detail {

template <typename M>
PerronEstimate power_iterate(const M& s, Index n, int max_iterations) {
  Vector x = Vector::Ones(n);
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= max_iterations; ++it) {
    const Vector y = s * x;
    const double mass = y.sum();
    if (mass == 0.0) return {0.0, true, it, false};  // S^k 1 = 0 forces S nilpotent
    const double q = x.dot(y) / x.dot(x);
    x = y / mass;
    if (it > 1 && std::abs(q - previous) <= 1e-12 * std::abs(q)) return {q, true, it, false};
    previous = q;
  }
  return {previous, false, max_iterations, false};
}

}  // namespace detail

/// Perron root of a non-negative profile by power iteration from the all-ones
/// vector (Rayleigh quotients, relative change < 1e-12, at most 10^4 steps).
/// Falls back to a dense eigensolve for n <= 512 when the iteration stalls.
inline PerronEstimate perron_radius(const VarianceProfile& s, int max_iterations = 10000) {
  PerronEstimate est =
      s.visit([&](const auto& m) { return detail::power_iterate(m, s.size(), max_iterations); });
  if (!est.converged && s.size() <= 512) {
    const Spectrum spec = eigenvalues_dense(s.to_dense());
    est.radius = spec.radius;
    est.converged = spec.converged;
    est.used_fallback = true;
  }
  return est;
}

enum class TraceMethod { automatic, accumulate, spectral };

/// tr S^k for k = 1..kmax.
///
/// `accumulate` multiplies out the powers (exact up to rounding, O(kmax n^3)
/// dense). `spectral` sums powers of the eigenvalues, which is what
/// `automatic` picks for large dense profiles with many powers.
inline std::vector<double> trace_powers(const VarianceProfile& s, int kmax,
                                        TraceMethod method = TraceMethod::automatic) {
  detail::require(kmax >= 1, Errc::invalid_argument, "trace_powers needs kmax >= 1");
  const Index n = s.size();
  if (method == TraceMethod::automatic) {
    const bool cheap = s.is_sparse() ? kmax <= 6 : (n <= 256 || kmax <= 4);
    method = cheap ? TraceMethod::accumulate : TraceMethod::spectral;
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(kmax));
  if (method == TraceMethod::spectral) {
    const Spectrum spec = eigenvalues_dense(s.to_dense());
    detail::require(spec.converged, Errc::numerical_failure, "eigensolve for trace powers did not converge");
    std::vector<Complex> power(spec.eigenvalues.begin(), spec.eigenvalues.end());
    for (int k = 1; k <= kmax; ++k) {
      Complex sum = 0.0;
      for (std::size_t i = 0; i < power.size(); ++i) {
        sum += power[i];
        power[i] *= spec.eigenvalues[i];
      }
      out.push_back(std::max(0.0, sum.real()));
    }
    return out;
  }
  if (s.is_sparse()) {
    const SparseMatrix& base = s.sparse_storage();
    SparseMatrix power = base;
    for (int k = 1; k <= kmax; ++k) {
      if (k > 1) power = SparseMatrix(power * base);
      double t = 0.0;
      for (Index i = 0; i < n; ++i) t += power.coeff(i, i);
      out.push_back(t);
    }
    return out;
  }
  const Matrix& base = s.dense_storage();
  Matrix power = base;
  Matrix next(n, n);
  for (int k = 1; k <= kmax; ++k) {
    if (k > 1) {
      next.noalias() = power * base;
      power.swap(next);
    }
    out.push_back(power.trace());
  }
  return out;
}

struct DetScan {
  std::vector<std::pair<double, double>> values;  // (gamma, det(I - gamma S))
  double min = std::numeric_limits<double>::infinity();
};

/// det(I - gamma S) for one gamma by pivoted LU (sparse LU for sparse storage).
inline double det_one_minus_gamma(const VarianceProfile& s, double gamma) {
  const Index n = s.size();
  if (s.is_sparse()) {
    SparseMatrix a = -gamma * s.sparse_storage();
    SparseMatrix eye(n, n);
    eye.setIdentity();
    Eigen::SparseMatrix<double, Eigen::ColMajor> m = a + eye;
    m.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double, Eigen::ColMajor>> lu;
    lu.compute(m);
    if (lu.info() != Eigen::Success) return 0.0;  // structurally or numerically singular
    return lu.determinant();
  }
  const Matrix m = Matrix::Identity(n, n) - gamma * s.dense_storage();
  return Eigen::PartialPivLU<Matrix>(m).determinant();
}

inline DetScan det_one_minus_gamma(const VarianceProfile& s, const std::vector<double>& gamma_grid) {
  DetScan scan;
  scan.values.reserve(gamma_grid.size());
  for (double g : gamma_grid) {
    const double d = det_one_minus_gamma(s, g);
    scan.values.emplace_back(g, d);
    scan.min = std::min(scan.min, d);
  }
  return scan;
}

/// `size` equispaced points covering [0, 1 - epsilon].
inline std::vector<double> uniform_gamma_grid(double epsilon, int size) {
  detail::require(size >= 1, Errc::invalid_argument, "gamma grid needs at least one point");
  detail::require(epsilon > 0.0 && epsilon <= 1.0, Errc::invalid_argument, "epsilon must lie in (0, 1]");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(size));
  if (size == 1) return {1.0 - epsilon};
  for (int i = 0; i < size; ++i) grid.push_back((1.0 - epsilon) * i / (size - 1));
  return grid;
}

// ---------------------------------------------------------------------------
// Assumption checks (finite-n stand-ins for the asymptotic conditions)

struct AssumptionThresholds {
  double c_s = 2.0;        // bound on min(max row l1, max column l1)
  double c_s_prime = 2.0;  // bound on K_n * max s_ij
  double epsilon = 0.1;    // gamma grid covers [0, 1 - epsilon]
  int grid_size = 64;
  double perron_tolerance = 1e-8;
};

struct AssumptionReport {
  double max_row_l1 = 0.0;
  double max_col_l1 = 0.0;
  double max_entry_times_k = 0.0;
  double perron_radius = 0.0;
  bool perron_converged = false;
  std::vector<std::pair<double, double>> det_grid;
  double min_det = 0.0;
  bool row_sum_ok = false;
  bool entry_ok = false;
  bool det_ok = false;
  bool perron_ok = false;

  bool all_pass() const { return row_sum_ok && entry_ok && det_ok && perron_ok; }
};

inline AssumptionReport check_assumptions(const VarianceProfile& s, const AssumptionThresholds& t) {
  detail::require(t.c_s > 0 && t.c_s_prime > 0 && t.epsilon > 0, Errc::invalid_argument,
                  "assumption thresholds must be positive");
  AssumptionReport r;
  r.max_row_l1 = s.row_sums().maxCoeff();
  r.max_col_l1 = s.col_sums().maxCoeff();
  r.max_entry_times_k = s.max_entry() * s.k_scale();
  const PerronEstimate perron = perron_radius(s);
  r.perron_radius = perron.radius;
  r.perron_converged = perron.converged;
  if (t.grid_size > 0) {
    DetScan scan = det_one_minus_gamma(s, uniform_gamma_grid(t.epsilon, t.grid_size));
    r.det_grid = std::move(scan.values);
    r.min_det = scan.min;
  } else {
    r.min_det = std::numeric_limits<double>::quiet_NaN();
  }
  r.row_sum_ok = std::min(r.max_row_l1, r.max_col_l1) <= t.c_s;
  r.entry_ok = r.max_entry_times_k <= t.c_s_prime;
  r.det_ok = t.grid_size <= 0 || r.min_det > 0.0;
  r.perron_ok = r.perron_radius <= 1.0 + t.perron_tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Generators

/// S = (1/n) 1 1^T.
inline VarianceProfile build_iid(Index n) {
  detail::require(n >= 1, Errc::invalid_dimension, "iid profile needs n >= 1");
  return VarianceProfile::from_dense(Matrix::Constant(n, n, 1.0 / static_cast<double>(n)), static_cast<double>(n),
                                     Provenance::iid);
}

/// Block profile from a positive d x m matrix A: A^(pn) = (1/(pn)) A (x) 1_{mn} 1_{dn}^T
/// with p = md, divided by its computed Perron root when `normalize` is set.
inline VarianceProfile build_block(const Matrix& a, Index n, bool normalize = true) {
  detail::require(n >= 1, Errc::invalid_dimension, "block profile needs n >= 1");
  detail::require(a.size() >= 1, Errc::invalid_profile, "block matrix is empty");
  detail::require(a.allFinite() && (a.array() > 0.0).all(), Errc::invalid_profile,
                  "block matrix entries must be strictly positive");
  const Index d = a.rows();
  const Index m = a.cols();
  const Index size = m * d * n;
  const Index row_block = m * n;
  const Index col_block = d * n;
  Matrix s(size, size);
  for (Index i = 0; i < size; ++i)
    for (Index j = 0; j < size; ++j) s(i, j) = a(i / row_block, j / col_block) / static_cast<double>(size);
  if (normalize) {
    const PerronEstimate rho = perron_radius(VarianceProfile::from_dense(s, static_cast<double>(size)));
    detail::require(rho.converged && rho.radius > 0.0, Errc::numerical_failure,
                    "could not compute the Perron root of the block profile");
    s /= rho.radius;
  }
  return VarianceProfile::from_dense(std::move(s), static_cast<double>(size), Provenance::block);
}

namespace detail {

inline double kernel_node(Index i, Index n) { return static_cast<double>(i + 1) / static_cast<double>(n); }

inline double checked_kernel_value(const KernelSpec& kernel, double x, double y) {
  const double v = kernel(x, y);
  if (!(std::isfinite(v) && v >= 0.0)) [[unlikely]]
    throw Error(Errc::invalid_kernel, "kernel " + kernel.to_string() + " is negative or non-finite at a grid point");
  return v;
}

// Uniform on [0,1) from the top 53 bits; fixed so draws reproduce across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// s_ij = S(i/n, j/n) / n, i, j = 1..n.
inline VarianceProfile build_sampled_kernel(const KernelSpec& kernel, Index n) {
  detail::require(n >= 1, Errc::invalid_dimension, "kernel profile needs n >= 1");
  Matrix s(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      s(i, j) = detail::checked_kernel_value(kernel, detail::kernel_node(i, n), detail::kernel_node(j, n)) /
                static_cast<double>(n);
  return VarianceProfile::from_dense(std::move(s), static_cast<double>(n), Provenance::kernel);
}

/// Erdos-Renyi sparsification: s_ij = B_ij / K with B_ij ~ Bernoulli(K S(i/n,j/n)/n).
/// Probabilities above one are rejected, not clamped.
inline VarianceProfile build_er_sparse(const KernelSpec& kernel, Index n, double k, Rng& rng) {
  detail::require(n >= 1, Errc::invalid_dimension, "ER profile needs n >= 1");
  detail::require(k > 0.0 && std::isfinite(k), Errc::invalid_sparsity_scale, "K_n must be positive");
  const double dn = static_cast<double>(n);
  Matrix prob(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double p =
          k * detail::checked_kernel_value(kernel, detail::kernel_node(i, n), detail::kernel_node(j, n)) / dn;
      if (p > 1.0 + 4.0 * std::numeric_limits<double>::epsilon()) [[unlikely]]
        throw Error(Errc::invalid_sparsity_scale,
                    "K_n * S_ij exceeds 1 at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      prob(i, j) = std::min(p, 1.0);
    }
  std::vector<Eigen::Triplet<double>> entries;
  const double value = 1.0 / k;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (detail::uniform01(rng) < prob(i, j)) entries.emplace_back(i, j, value);
  SparseMatrix s(n, n);
  s.setFromTriplets(entries.begin(), entries.end());
  return VarianceProfile::from_sparse(std::move(s), k, Provenance::er_sparse);
}

/// Each row keeps a uniform random K-subset of columns, with value
/// (n/K) S(i/n,j/n)/n = S(i/n,j/n)/K; rows are independent.
inline VarianceProfile build_fixed_outdegree(const KernelSpec& kernel, Index n, Index k, Rng& rng) {
  detail::require(n >= 1, Errc::invalid_dimension, "out-degree profile needs n >= 1");
  detail::require(k >= 1 && k <= n, Errc::invalid_degree, "out-degree must satisfy 1 <= K <= n");
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n * k));
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  const double dk = static_cast<double>(k);
  for (Index i = 0; i < n; ++i) {
    // Floyd's sampling of a uniform k-subset of {0..n-1}.
    chosen.clear();
    for (Index j = n - k; j < n; ++j) {
      const auto t = static_cast<Index>(rng() % static_cast<std::uint64_t>(j + 1));
      const bool seen = std::find(chosen.begin(), chosen.end(), t) != chosen.end();
      chosen.push_back(seen ? j : t);
    }
    std::sort(chosen.begin(), chosen.end());
    for (Index j : chosen)
      entries.emplace_back(
          i, j, detail::checked_kernel_value(kernel, detail::kernel_node(i, n), detail::kernel_node(j, n)) / dk);
  }
  SparseMatrix s(n, n);
  s.setFromTriplets(entries.begin(), entries.end());
  return VarianceProfile::from_sparse(std::move(s), dk, Provenance::fixed_outdeg);
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   n k_scale provenance
//   dense            followed by n rows of n values, or
//   sparse nnz       followed by nnz lines `i j value` (0-based)

inline void write_profile(std::ostream& os, const VarianceProfile& s) {
  const auto old_precision = os.precision(17);
  os << s.size() << ' ' << s.k_scale() << ' ' << provenance_name(s.provenance()) << '\n';
  if (s.is_sparse()) {
    os << "sparse " << s.nonzeros() << '\n';
    s.for_each_nonzero([&](Index i, Index j, double v) { os << i << ' ' << j << ' ' << v << '\n'; });
  } else {
    os << "dense\n";
    const Matrix& d = s.dense_storage();
    for (Index i = 0; i < s.size(); ++i) {
      for (Index j = 0; j < s.size(); ++j) os << (j ? " " : "") << d(i, j);
      os << '\n';
    }
  }
  os.precision(old_precision);
}

inline VarianceProfile read_profile(std::istream& is) {
  Index n = 0;
  double k_scale = 0.0;
  std::string provenance, layout;
  if (!(is >> n >> k_scale >> provenance >> layout))
    throw Error(Errc::parse_error, "profile header must be `n k_scale provenance` then `dense` or `sparse nnz`");
  detail::require(n >= 1, Errc::parse_error, "profile dimension must be >= 1");
  const Provenance p = parse_provenance(provenance);
  if (layout == "dense") {
    Matrix s(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (!(is >> s(i, j)))
          throw Error(Errc::parse_error, "dense profile row " + std::to_string(i + 1) + " column " +
                                             std::to_string(j + 1) + " is missing or malformed");
    return VarianceProfile::from_dense(std::move(s), k_scale, p, VarianceProfile::Storage::dense);
  }
  if (layout == "sparse") {
    Index nnz = 0;
    if (!(is >> nnz) || nnz < 0) throw Error(Errc::parse_error, "sparse profile needs a nonzero count");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(nnz));
    for (Index k = 0; k < nnz; ++k) {
      Index i = 0, j = 0;
      double v = 0.0;
      if (!(is >> i >> j >> v))
        throw Error(Errc::parse_error, "sparse entry " + std::to_string(k + 1) + " is missing or malformed");
      detail::require(i >= 0 && i < n && j >= 0 && j < n, Errc::parse_error,
                      "sparse entry " + std::to_string(k + 1) + " index out of range");
      entries.emplace_back(i, j, v);
    }
    SparseMatrix s(n, n);
    s.setFromTriplets(entries.begin(), entries.end());
    return VarianceProfile::from_sparse(std::move(s), k_scale, p, VarianceProfile::Storage::sparse);
  }
  throw Error(Errc::parse_error, "unknown profile layout '" + layout + "'");
}

}  // namespace vprm
