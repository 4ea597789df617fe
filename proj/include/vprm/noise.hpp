#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vprm/core.hpp"
#include "vprm/rng.hpp"

namespace vprm {

enum class Law { rademacher, real_gaussian, complex_gaussian, uniform_real, pareto_symmetric };

/// A centred law W with E|W|^2 = 1 (before truncation) and a known pseudo-moment E W^2.
///
/// Every builtin law is symmetric, so the recentring term of a truncation,
/// E[1{|W|<=M} W], is exactly zero and all truncated moments have closed forms.
class NoiseModel {
 public:
  static NoiseModel rademacher() { return NoiseModel(Law::rademacher); }
  static NoiseModel real_gaussian() { return NoiseModel(Law::real_gaussian); }
  static NoiseModel complex_gaussian() { return NoiseModel(Law::complex_gaussian); }
  static NoiseModel uniform_real() { return NoiseModel(Law::uniform_real); }

  /// |W| = Y / sqrt(alpha/(alpha-2)) with P(Y > t) = t^-alpha, t >= 1, and a fair random sign.
  static NoiseModel pareto_symmetric(double alpha) {
    detail::require(std::isfinite(alpha) && alpha > 2.0, Errc::invalid_model,
                    "pareto tail index must exceed 2 for a finite variance");
    NoiseModel m(Law::pareto_symmetric);
    m.alpha_ = alpha;
    return m;
  }

  /// Grammar: rademacher | gauss-real | gauss-complex | uniform | pareto:ALPHA | trunc:BASE:M
  static NoiseModel parse(std::string_view spec) {
    const std::string s(spec);
    if (s == "rademacher") return rademacher();
    if (s == "gauss-real") return real_gaussian();
    if (s == "gauss-complex") return complex_gaussian();
    if (s == "uniform") return uniform_real();
    if (s.rfind("pareto:", 0) == 0) return pareto_symmetric(number(s.substr(7), spec));
    if (s.rfind("trunc:", 0) == 0) {
      const auto colon = s.rfind(':');
      detail::require(colon > 6, Errc::parse_error, "trunc needs `trunc:BASE:M`");
      return parse(s.substr(6, colon - 6)).truncated(number(s.substr(colon + 1), spec));
    }
    throw Error(Errc::parse_error, "unknown noise spec '" + s + "'");
  }

  /// The law of 1{|W| <= M} W - E[1{|W| <= M} W].
  NoiseModel truncated(double level) const {
    detail::require(std::isfinite(level) && level > 0.0, Errc::invalid_model, "truncation level must be positive");
    NoiseModel m = *this;
    m.truncation_ = truncation_ ? std::min(*truncation_, level) : level;
    return m;
  }

  Law law() const noexcept { return law_; }
  double alpha() const noexcept { return alpha_; }
  std::optional<double> truncation() const noexcept { return truncation_; }
  bool is_real() const noexcept { return law_ != Law::complex_gaussian; }

  /// sup |W| when finite.
  std::optional<double> bound() const {
    std::optional<double> b;
    if (law_ == Law::rademacher) b = 1.0;
    if (law_ == Law::uniform_real) b = std::sqrt(3.0);
    if (truncation_) b = b ? std::min(*b, *truncation_) : *truncation_;
    return b;
  }

  /// E|W|^2; equal to 1 unless truncation removes mass.
  double second_moment() const {
    if (!truncation_) return 1.0;
    const double m = *truncation_;
    switch (law_) {
      case Law::rademacher: return m >= 1.0 ? 1.0 : 0.0;
      case Law::real_gaussian: {
        const double phi = std::exp(-0.5 * m * m) / std::sqrt(2.0 * std::numbers::pi);
        return std::erf(m / std::numbers::sqrt2) - 2.0 * m * phi;
      }
      case Law::complex_gaussian: return 1.0 - std::exp(-m * m) * (1.0 + m * m);  // |W|^2 ~ Exp(1)
      case Law::uniform_real: {
        const double r3 = std::sqrt(3.0);
        return m >= r3 ? 1.0 : m * m * m / (3.0 * r3);
      }
      case Law::pareto_symmetric: {
        const double y = m * pareto_scale();  // cutoff on the unnormalised Pareto variable
        return y <= 1.0 ? 0.0 : 1.0 - std::pow(y, 2.0 - alpha_);
      }
    }
    return 1.0;
  }

  /// E W^2: equals E|W|^2 for real laws and 0 for the circular complex Gaussian.
  Complex pseudo_moment() const { return is_real() ? Complex(second_moment(), 0.0) : Complex(0.0, 0.0); }

  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    if (truncation_) os << "trunc:";
    switch (law_) {
      case Law::rademacher: os << "rademacher"; break;
      case Law::real_gaussian: os << "gauss-real"; break;
      case Law::complex_gaussian: os << "gauss-complex"; break;
      case Law::uniform_real: os << "uniform"; break;
      case Law::pareto_symmetric: os << "pareto:" << alpha_; break;
    }
    if (truncation_) os << ':' << *truncation_;
    return os.str();
  }

  /// One draw. Real laws return a zero imaginary part.
  Complex draw(Rng& rng) const {
    if (law_ == Law::complex_gaussian) {
      std::normal_distribution<double> normal;
      const double re = normal(rng) * (1.0 / std::numbers::sqrt2);
      const double im = normal(rng) * (1.0 / std::numbers::sqrt2);
      return cut(Complex(re, im));
    }
    return cut(Complex(draw_real_untruncated(rng), 0.0));
  }

  double draw_real(Rng& rng) const {
    const double w = draw_real_untruncated(rng);
    return truncation_ && std::abs(w) > *truncation_ ? 0.0 : w;
  }

 private:
  explicit NoiseModel(Law law) : law_(law) {}

  double pareto_scale() const { return std::sqrt(alpha_ / (alpha_ - 2.0)); }

  Complex cut(Complex w) const { return truncation_ && std::abs(w) > *truncation_ ? Complex(0.0, 0.0) : w; }

  double draw_real_untruncated(Rng& rng) const {
    switch (law_) {
      case Law::rademacher: return (rng() >> 63) ? 1.0 : -1.0;
      case Law::real_gaussian: return std::normal_distribution<double>()(rng);
      case Law::uniform_real: {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return std::sqrt(3.0) * (2.0 * u - 1.0);
      }
      case Law::pareto_symmetric: {
        const std::uint64_t bits = rng();
        const double u = (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double y = std::pow(u, -1.0 / alpha_);
        return (rng() >> 63 ? y : -y) / pareto_scale();
      }
      case Law::complex_gaussian: break;
    }
    throw Error(Errc::invalid_model, "complex law has no real draw");
  }

  static double number(const std::string& text, std::string_view spec) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(Errc::parse_error, "bad number in noise spec '" + std::string(spec) + "'");
  }

  Law law_;
  double alpha_ = 0.0;
  std::optional<double> truncation_;
};

inline NoiseModel truncate(const NoiseModel& model, double level) { return model.truncated(level); }

inline Complex pseudo_moment(const NoiseModel& model) { return model.pseudo_moment(); }

inline std::vector<Complex> sample_w(const NoiseModel& model, Rng& rng, std::size_t count) {
  detail::require(count >= 1, Errc::invalid_argument, "sample_w needs count >= 1");
  std::vector<Complex> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(model.draw(rng));
  return out;
}

}  // namespace vprm
