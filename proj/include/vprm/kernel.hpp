#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "vprm/core.hpp"

namespace vprm {

/// A continuous non-negative kernel on [0,1]^2, optionally rescaled.
///
/// Spec strings: `const:c` (or `constC`), `prod` (xy), `affine` (1 + xy),
/// `gauss` (exp(-(x-y)^2)), `min` (min(x,y)), `table:PATH`. A `*F` suffix
/// multiplies the kernel by F, e.g. `prod*3`.
class KernelSpec {
 public:
  enum class Kind { constant, product, affine, gauss, min, table, step };

  static KernelSpec constant(double c) {
    KernelSpec k(Kind::constant);
    k.c_ = c;
    return k;
  }
  static KernelSpec product() { return KernelSpec(Kind::product); }
  static KernelSpec affine() { return KernelSpec(Kind::affine); }
  static KernelSpec gauss() { return KernelSpec(Kind::gauss); }
  static KernelSpec min() { return KernelSpec(Kind::min); }

  /// Bilinear interpolation of an (m+1)x(m+1) table of values on the uniform grid
  /// x_i = i/m, y_j = j/m.
  static KernelSpec table(Matrix grid, std::string source = "inline") {
    detail::require(grid.rows() == grid.cols() && grid.rows() >= 2, Errc::invalid_kernel,
                    "kernel table must be (m+1)x(m+1) with m >= 1");
    detail::require(grid.allFinite(), Errc::invalid_kernel, "kernel table has non-finite values");
    KernelSpec k(Kind::table);
    k.table_ = std::move(grid);
    k.source_ = std::move(source);
    return k;
  }

  /// Piecewise-constant embedding of an n x n matrix: value n*s_ij on the cell
  /// ((i-1)/n, i/n] x ((j-1)/n, j/n] (cell 1 also takes the point 0).
  static KernelSpec step(Matrix s) {
    detail::require(s.rows() == s.cols() && s.rows() >= 1, Errc::invalid_kernel, "step kernel needs a square matrix");
    KernelSpec k(Kind::step);
    k.table_ = std::move(s);
    k.source_ = "step";
    return k;
  }

  static KernelSpec load_table(const std::string& path) {
    std::ifstream in(path);
    detail::require(static_cast<bool>(in), Errc::io_error, "cannot open kernel table '" + path + "'");
    std::vector<double> values;
    double v = 0.0;
    while (in >> v) values.push_back(v);
    detail::require(in.eof(), Errc::parse_error, "kernel table '" + path + "' has a non-numeric token");
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
    detail::require(side * side == static_cast<Index>(values.size()) && side >= 2, Errc::parse_error,
                    "kernel table '" + path + "' is not a square grid of >= 2x2 values");
    Matrix grid(side, side);
    for (Index i = 0; i < side; ++i)
      for (Index j = 0; j < side; ++j) grid(i, j) = values[static_cast<std::size_t>(i * side + j)];
    return table(std::move(grid), path);
  }

  static KernelSpec parse(std::string_view spec) {
    std::string s(spec);
    double factor = 1.0;
    if (const auto star = s.rfind('*'); star != std::string::npos) {
      factor = parse_number(s.substr(star + 1), spec);
      s = s.substr(0, star);
    }
    KernelSpec k(Kind::constant);
    if (s == "prod") {
      k = product();
    } else if (s == "affine") {
      k = affine();
    } else if (s == "gauss") {
      k = gauss();
    } else if (s == "min") {
      k = min();
    } else if (s.rfind("const:", 0) == 0) {
      k = constant(parse_number(s.substr(6), spec));
    } else if (s.rfind("const", 0) == 0 && s.size() > 5) {
      k = constant(parse_number(s.substr(5), spec));
    } else if (s.rfind("table:", 0) == 0) {
      k = load_table(s.substr(6));
    } else if (s.rfind("table=", 0) == 0) {
      k = load_table(s.substr(6));
    } else {
      throw Error(Errc::parse_error, "unknown kernel spec '" + std::string(spec) + "'");
    }
    return k.scaled(factor);
  }

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }

  KernelSpec scaled(double factor) const {
    KernelSpec k = *this;
    k.scale_ *= factor;
    return k;
  }

  double operator()(double x, double y) const { return scale_ * raw(x, y); }

  /// An upper bound on sup |S| over [0,1]^2 (exact for every builtin kind).
  double sup_norm() const {
    switch (kind_) {
      case Kind::constant: return std::abs(scale_ * c_);
      case Kind::product: return std::abs(scale_);
      case Kind::affine: return 2.0 * std::abs(scale_);
      case Kind::gauss: return std::abs(scale_);
      case Kind::min: return std::abs(scale_);
      case Kind::table: return std::abs(scale_) * table_.cwiseAbs().maxCoeff();
      case Kind::step:
        return std::abs(scale_) * static_cast<double>(table_.rows()) * table_.cwiseAbs().maxCoeff();
    }
    return 0.0;
  }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
      case Kind::constant: os << "const:" << c_; break;
      case Kind::product: os << "prod"; break;
      case Kind::affine: os << "affine"; break;
      case Kind::gauss: os << "gauss"; break;
      case Kind::min: os << "min"; break;
      case Kind::table: os << "table:" << source_; break;
      case Kind::step: os << "step:" << table_.rows(); break;
    }
    if (scale_ != 1.0) os << '*' << scale_;
    return os.str();
  }

 private:
  explicit KernelSpec(Kind kind) : kind_(kind) {}

  static double parse_number(const std::string& text, std::string_view spec) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw Error(Errc::parse_error, "bad number in kernel spec '" + std::string(spec) + "'");
  }

  double raw(double x, double y) const {
    switch (kind_) {
      case Kind::constant: return c_;
      case Kind::product: return x * y;
      case Kind::affine: return 1.0 + x * y;
      case Kind::gauss: return std::exp(-(x - y) * (x - y));
      case Kind::min: return std::min(x, y);
      case Kind::table: return bilinear(x, y);
      case Kind::step: {
        const Index n = table_.rows();
        const auto cell = [n](double t) {
          const auto i = static_cast<Index>(std::ceil(t * static_cast<double>(n) - 1e-9)) - 1;  // right endpoints stay in their cell
          return std::clamp<Index>(i, 0, n - 1);
        };
        return static_cast<double>(n) * table_(cell(x), cell(y));
      }
    }
    return 0.0;
  }

  double bilinear(double x, double y) const {
    const Index m = table_.rows() - 1;
    const double fx = std::clamp(x, 0.0, 1.0) * static_cast<double>(m);
    const double fy = std::clamp(y, 0.0, 1.0) * static_cast<double>(m);
    const Index i = std::min<Index>(static_cast<Index>(fx), m - 1);
    const Index j = std::min<Index>(static_cast<Index>(fy), m - 1);
    const double tx = fx - static_cast<double>(i);
    const double ty = fy - static_cast<double>(j);
    return (1 - tx) * (1 - ty) * table_(i, j) + tx * (1 - ty) * table_(i + 1, j) + (1 - tx) * ty * table_(i, j + 1) +
           tx * ty * table_(i + 1, j + 1);
  }

  Kind kind_;
  double c_ = 1.0;
  double scale_ = 1.0;
  Matrix table_;
  std::string source_;
};

}  // namespace vprm
