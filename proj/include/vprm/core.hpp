#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace vprm {

using Index = Eigen::Index;
using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using CMatrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Errc {
  invalid_dimension,
  invalid_profile,
  invalid_kernel,
  invalid_sparsity_scale,
  invalid_degree,
  invalid_model,
  invalid_argument,
  domain_error,
  insufficient_input,
  size_limit,
  needs_constant,
  tail_unsatisfiable,
  parse_error,
  io_error,
  numerical_failure,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_dimension: return "invalid-dimension";
    case Errc::invalid_profile: return "invalid-profile";
    case Errc::invalid_kernel: return "invalid-kernel";
    case Errc::invalid_sparsity_scale: return "invalid-sparsity-scale";
    case Errc::invalid_degree: return "invalid-degree";
    case Errc::invalid_model: return "invalid-model";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::domain_error: return "domain-error";
    case Errc::insufficient_input: return "insufficient-input";
    case Errc::size_limit: return "size-limit";
    case Errc::needs_constant: return "needs-constant";
    case Errc::tail_unsatisfiable: return "tail-unsatisfiable";
    case Errc::parse_error: return "parse-error";
    case Errc::io_error: return "io-error";
    case Errc::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

// Single exception type for the library; the code drives CLI exit statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

namespace detail {

// The message is only turned into a std::string on failure, so literal
// messages cost nothing in hot loops.
template <typename Message>
void require(bool condition, Errc code, const Message& what) {
  if (!condition) [[unlikely]]
    throw Error(code, std::string(what));
}

}  // namespace detail

}  // namespace vprm
