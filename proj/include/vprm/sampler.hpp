#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>

#include "vprm/core.hpp"
#include "vprm/noise.hpp"
#include "vprm/profile.hpp"
#include "vprm/rng.hpp"

namespace vprm {

/// X with X_ij = sqrt(s_ij) W_ij. Sparse profiles give sparse samples on the same pattern.
template <typename Scalar>
class SampledMatrix {
 public:
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Sparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

  SampledMatrix(Dense x, std::string profile_id, std::string noise_id, std::uint64_t seed)
      : storage_(std::move(x)), profile_id_(std::move(profile_id)), noise_id_(std::move(noise_id)), seed_(seed) {}
  SampledMatrix(Sparse x, std::string profile_id, std::string noise_id, std::uint64_t seed)
      : storage_(std::move(x)), profile_id_(std::move(profile_id)), noise_id_(std::move(noise_id)), seed_(seed) {}

  Index size() const {
    return std::visit([](const auto& m) { return static_cast<Index>(m.rows()); }, storage_);
  }
  bool is_sparse() const noexcept { return std::holds_alternative<Sparse>(storage_); }

  Dense to_dense() const {
    if (const auto* d = std::get_if<Dense>(&storage_)) return *d;
    return Dense(std::get<Sparse>(storage_));
  }
  const Dense& dense() const { return std::get<Dense>(storage_); }
  const Sparse& sparse() const { return std::get<Sparse>(storage_); }

  const std::string& profile_id() const noexcept { return profile_id_; }
  const std::string& noise_id() const noexcept { return noise_id_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// tr X
  Scalar trace() const {
    if (const auto* d = std::get_if<Dense>(&storage_)) return d->trace();
    const auto& s = std::get<Sparse>(storage_);
    Scalar t(0);
    for (Index i = 0; i < s.rows(); ++i) t += s.coeff(i, i);
    return t;
  }

  /// tr X^2 = sum_ij X_ij X_ji, in O(nnz).
  Scalar trace_square() const {
    Scalar t(0);
    if (const auto* d = std::get_if<Dense>(&storage_)) {
      const Index n = d->rows();
      for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i) t += (*d)(i, j) * (*d)(j, i);
      return t;
    }
    const auto& s = std::get<Sparse>(storage_);
    for (Index i = 0; i < s.rows(); ++i)
      for (typename Sparse::InnerIterator it(s, i); it; ++it) t += it.value() * s.coeff(it.col(), i);
    return t;
  }

 private:
  std::variant<Dense, Sparse> storage_;
  std::string profile_id_;
  std::string noise_id_;
  std::uint64_t seed_;
};

using RealSample = SampledMatrix<double>;
using ComplexSample = SampledMatrix<Complex>;
using AnySample = std::variant<RealSample, ComplexSample>;

namespace detail {

template <typename Scalar>
Scalar draw_as(const NoiseModel& model, Rng& rng) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return model.draw_real(rng);
  } else {
    return model.draw(rng);
  }
}

// Per-entry noise source for sampling. Rademacher signs are taken 64 per
// generator call, most significant bit first; other laws draw one at a time.
template <typename Scalar>
class EntrySource {
 public:
  EntrySource(const NoiseModel& model, Rng& rng)
      : model_(model),
        rng_(rng),
        signs_(model.law() == Law::rademacher),
        zero_(signs_ && model.truncation() && *model.truncation() < 1.0) {}

  Scalar next() {
    if (!signs_) return draw_as<Scalar>(model_, rng_);
    if (left_ == 0) {
      word_ = rng_();
      left_ = 64;
    }
    const bool positive = (word_ >> 63) != 0;
    word_ <<= 1;
    --left_;
    if (zero_) return Scalar(0.0);
    return Scalar(positive ? 1.0 : -1.0);
  }

 private:
  const NoiseModel& model_;
  Rng& rng_;
  bool signs_;
  bool zero_;
  std::uint64_t word_ = 0;
  int left_ = 0;
};

inline std::string profile_tag(const VarianceProfile& s) {
  return std::string(provenance_name(s.provenance())) + ":" + std::to_string(s.size());
}

}  // namespace detail

/// Samples X in a fixed scalar type. Noise draws are consumed in row-major order
/// over the nonzero entries of S only, so dense and sparse storage of the same
/// profile give identical X for the same generator state.
template <typename Scalar>
SampledMatrix<Scalar> sample_matrix_as(const VarianceProfile& s, const NoiseModel& model, Rng& rng,
                                       std::uint64_t seed = 0) {
  if constexpr (std::is_same_v<Scalar, double>)
    detail::require(model.is_real(), Errc::invalid_model, "complex noise cannot be sampled into a real matrix");
  const Index n = s.size();
  detail::EntrySource<Scalar> source(model, rng);
  if (s.is_sparse()) {
    std::vector<Eigen::Triplet<Scalar>> entries;
    entries.reserve(static_cast<std::size_t>(s.sparse_storage().nonZeros()));
    s.for_each_nonzero([&](Index i, Index j, double v) {
      entries.emplace_back(i, j, std::sqrt(v) * source.next());
    });
    typename SampledMatrix<Scalar>::Sparse x(n, n);
    x.setFromTriplets(entries.begin(), entries.end());
    return SampledMatrix<Scalar>(std::move(x), detail::profile_tag(s), model.to_string(), seed);
  }
  // Fill the transpose column by column so writes stay contiguous.
  typename SampledMatrix<Scalar>::Dense xt = SampledMatrix<Scalar>::Dense::Zero(n, n);
  const Matrix dt = s.dense_storage().transpose();
  for (Index i = 0; i < n; ++i) {
    const double* src = dt.col(i).data();
    Scalar* dst = xt.col(i).data();
    for (Index j = 0; j < n; ++j)
      if (const double v = src[j]; v != 0.0) dst[j] = std::sqrt(v) * source.next();
  }
  return SampledMatrix<Scalar>(xt.transpose(), detail::profile_tag(s), model.to_string(), seed);
}

/// Real matrix for real noise laws, complex otherwise.
inline AnySample sample_matrix(const VarianceProfile& s, const NoiseModel& model, Rng& rng, std::uint64_t seed = 0) {
  if (model.is_real()) return sample_matrix_as<double>(s, model, rng, seed);
  return sample_matrix_as<Complex>(s, model, rng, seed);
}

/// Same text layout as profiles, with `re im` entries.
template <typename Scalar>
void write_sample(std::ostream& os, const SampledMatrix<Scalar>& x) {
  const auto old_precision = os.precision(17);
  const auto put = [&](const Scalar& v) {
    const Complex c(v);
    os << c.real() << ' ' << c.imag();
  };
  os << x.size() << " 1 " << x.profile_id() << " " << x.noise_id() << " " << x.seed() << '\n';
  if (x.is_sparse()) {
    const auto& s = x.sparse();
    os << "sparse " << s.nonZeros() << '\n';
    for (Index i = 0; i < s.rows(); ++i)
      for (typename SampledMatrix<Scalar>::Sparse::InnerIterator it(s, i); it; ++it) {
        os << i << ' ' << it.col() << ' ';
        put(it.value());
        os << '\n';
      }
  } else {
    const auto& d = x.dense();
    os << "dense\n";
    for (Index i = 0; i < d.rows(); ++i) {
      for (Index j = 0; j < d.cols(); ++j) {
        if (j) os << ' ';
        put(d(i, j));
      }
      os << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace vprm
