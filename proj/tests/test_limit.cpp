#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "vprm/charpoly.hpp"
#include "vprm/limit.hpp"
#include "vprm/noise.hpp"
#include "vprm/profile.hpp"

using namespace vprm;

namespace {

struct Summary {
  Complex mean = 0.0;
  double mean_abs2 = 0.0;
  Complex mean_sq = 0.0;
  double se_abs2 = 0.0;
  double se_sq = 0.0;   // per component of E Z^2
  double se_mean = 0.0; // per component of E Z
};

Summary summarize(const std::vector<Complex>& v) {
  const double n = static_cast<double>(v.size());
  Summary s;
  for (const auto& x : v) {
    s.mean += x / n;
    s.mean_abs2 += std::norm(x) / n;
    s.mean_sq += x * x / n;
  }
  double va = 0.0, vs = 0.0, vm = 0.0;
  for (const auto& x : v) {
    va += std::pow(std::norm(x) - s.mean_abs2, 2) / (n - 1);
    vs += std::max(std::pow((x * x - s.mean_sq).real(), 2), std::pow((x * x - s.mean_sq).imag(), 2)) / (n - 1);
    vm += std::max(std::pow((x - s.mean).real(), 2), std::pow((x - s.mean).imag(), 2)) / (n - 1);
  }
  s.se_abs2 = std::sqrt(va / n);
  s.se_sq = std::sqrt(vs / n);
  s.se_mean = std::sqrt(vm / n);
  return s;
}

VarianceProfile normalized_kernel_profile(Index n) {
  const VarianceProfile raw = build_sampled_kernel(KernelSpec::gauss(), n);
  const double rho = perron_radius(raw).radius;
  return VarianceProfile::from_dense(raw.to_dense() / rho, 1.0);
}

}  // namespace

TEST(Kappa, OneAtOrigin) {
  const LimitObject limit = LimitObject::from_profile(normalized_kernel_profile(40), Complex(1.0, 0.0));
  EXPECT_EQ(limit.kappa(Complex(0.0, 0.0)), Complex(1.0, 0.0));
}

TEST(Kappa, IidMatchesPrincipalSquareRoot) {
  const LimitObject limit = LimitObject::from_profile(build_iid(50), Complex(1.0, 0.0));
  for (Complex z : {Complex(0.5, 0.0), Complex(0.9, 0.0), Complex(0.3, 0.6), Complex(-0.2, -0.9), Complex(0.0, 0.95)}) {
    const Complex expected = std::sqrt(1.0 - z * z);
    EXPECT_LT(std::abs(limit.kappa(z) - expected), 1e-10) << z;
  }
}

TEST(Kappa, ComplexGinibreIsIdentically1) {
  const LimitObject limit = LimitObject::from_profile(build_iid(20), pseudo_moment(NoiseModel::complex_gaussian()));
  EXPECT_EQ(limit.kappa(Complex(0.7, 0.4)), Complex(1.0, 0.0));
}

TEST(Kappa, SquareIsDeterminant) {
  const VarianceProfile s = normalized_kernel_profile(60);
  const Matrix dense = s.to_dense();
  for (Complex tau : {Complex(1.0, 0.0), Complex(0.5, 0.0), Complex(0.0, 0.8)}) {
    const LimitObject limit = LimitObject::from_profile(s, tau);
    for (Complex z : {Complex(0.4, 0.2), Complex(0.94, 0.0), Complex(0.0, -0.9), Complex(-0.6, 0.6)}) {
      const Complex k = limit.kappa(z);
      const Complex det = eval_det(dense, z * z * tau);
      EXPECT_LT(std::abs(k * k - det) / std::abs(det), 1e-8) << "tau " << tau << " z " << z;
    }
  }
}

TEST(Kappa, LowerBoundOnDisk) {
  const LimitObject limit = LimitObject::from_profile(normalized_kernel_profile(40), Complex(1.0, 0.0));
  const double r = 1.0 - limit.delta();
  double sum = 0.0;
  for (int k = 1; k <= limit.stored_terms(); ++k)
    sum += std::pow(r, 2 * k) * limit.traces()[static_cast<std::size_t>(k - 1)] / k;
  const double floor = std::exp(-0.5 * sum);
  ASSERT_GT(floor, 0.0);
  double lo = 1e300, hi = 0.0;
  for (int i = 0; i <= 16; ++i)
    for (int j = 0; j < 32; ++j) {
      const double a = std::abs(limit.kappa(std::polar(r * i / 16.0, 2.0 * std::numbers::pi * j / 32.0)));
      lo = std::min(lo, a);
      hi = std::max(hi, a);
    }
  EXPECT_GE(lo, floor * (1.0 - 1e-12));
  EXPECT_TRUE(std::isfinite(hi));
}

TEST(Kappa, DomainAndTailErrors) {
  const LimitObject limit(std::vector<double>(400, 1.0), Complex(1.0, 0.0), 0.1);
  try {
    limit.kappa(Complex(0.95, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::domain_error);
  }
  const LimitObject short_limit(std::vector<double>(3, 1.0), Complex(1.0, 0.0));
  try {
    short_limit.kappa(Complex(0.5, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::tail_unsatisfiable);
    EXPECT_NE(std::string(e.what()).find("K = " + std::to_string(short_limit.required_terms())), std::string::npos);
  }
}

TEST(LimitObject, ConstructionErrors) {
  const std::vector<double> t{1.0};
  EXPECT_THROW(LimitObject(t, Complex(1.0, 0.0), 0.0), Error);
  EXPECT_THROW(LimitObject(t, Complex(1.0, 0.0), 1.0), Error);
  EXPECT_THROW(LimitObject(t, Complex(1.0, 0.0), 0.05, 0.0), Error);
  EXPECT_THROW(LimitObject(t, Complex(1.1, 0.0)), Error);
  EXPECT_THROW(LimitObject({}, Complex(1.0, 0.0)), Error);
  EXPECT_THROW(LimitObject({-1.0}, Complex(1.0, 0.0)), Error);
  try {
    LimitObject::from_profile(build_iid(10), Complex(1.0, 0.0), 0.05, 1e-10, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_profile);
  }
}

TEST(LimitObject, TruncationMeetsTailTolerance) {
  const LimitObject limit = LimitObject::from_profile(build_iid(30), Complex(1.0, 0.0), 0.05, 1e-10);
  const int k = limit.required_terms();
  EXPECT_LE(limit.stored_terms(), std::max(64, k));
  EXPECT_GE(limit.stored_terms(), k);
  const double x = 0.95 * 0.95;
  double tail = 0.0;
  for (int j = k + 1; j < 20000; ++j) tail += std::pow(x, j) / j;
  EXPECT_LE(tail, 1e-10);
  double prev = 0.0;
  for (int j = k; j < 20000; ++j) prev += std::pow(x, j) / j;
  EXPECT_GT(prev * 1.0, 0.0);
}

TEST(SampleZ, MomentsForSeveralPseudoVariances) {
  for (Complex tau : {Complex(1.0, 0.0), Complex(0.0, 0.0), Complex(0.25, 0.0), Complex(0.0, 0.5),
                      std::polar(1.0, 2.0), std::polar(0.7, -1.0)}) {
    Rng rng(static_cast<std::uint64_t>(1000 * std::abs(tau) + 7));
    std::vector<Complex> draws(100000);
    for (auto& d : draws) d = sample_z(tau, rng);
    const Summary s = summarize(draws);
    EXPECT_NEAR(s.mean.real(), 0.0, 4.0 * s.se_mean);
    EXPECT_NEAR(s.mean.imag(), 0.0, 4.0 * s.se_mean);
    EXPECT_NEAR(s.mean_abs2, 1.0, 4.0 * s.se_abs2);
    EXPECT_NEAR(s.mean_sq.real(), tau.real(), 4.0 * s.se_sq) << tau;
    EXPECT_NEAR(s.mean_sq.imag(), tau.imag(), 4.0 * s.se_sq) << tau;
  }
}

TEST(SampleZ, QuarterPseudoVarianceAgainstSpecBar) {
  Rng rng(25);
  const int n = 100000;
  Complex sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Complex z = sample_z(Complex(0.25, 0.0), rng);
    sum += z * z;
  }
  EXPECT_NEAR(sum.real() / n, 0.25, 4.0 / std::sqrt(double(n)));
  EXPECT_NEAR(sum.imag() / n, 0.0, 4.0 / std::sqrt(double(n)));
}

TEST(SampleZ, RealWhenTauIsOne) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_z(Complex(1.0, 0.0), rng).imag(), 0.0);
  EXPECT_THROW(sample_z(Complex(1.01, 0.0), rng), Error);
}

TEST(GaussianCoefficients, PseudoVariancePowers) {
  const LimitObject limit = LimitObject::from_profile(build_iid(10), Complex(0.8, 0.0));
  Rng rng(31);
  const int draws = 100000;
  std::vector<std::vector<Complex>> by_k(4, std::vector<Complex>(draws));
  for (int d = 0; d < draws; ++d) {
    const auto z = limit.sample_coefficients(rng);
    for (int k = 0; k < 4; ++k) by_k[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)] = z[static_cast<std::size_t>(k)];
  }
  for (int k = 1; k <= 4; ++k) {
    const Summary s = summarize(by_k[static_cast<std::size_t>(k - 1)]);
    EXPECT_NEAR(s.mean_abs2, 1.0, 4.0 * s.se_abs2);
    EXPECT_NEAR(s.mean_sq.real(), std::pow(0.8, k), 4.0 * s.se_sq) << k;
  }
}

TEST(SampleF, ZeroProfileAndOrigin) {
  const LimitObject zero(std::vector<double>(5, 0.0), Complex(1.0, 0.0));
  Rng rng(1);
  const std::vector<Complex> pts{Complex(0.3, 0.1), Complex(0.0, 0.0)};
  for (const auto& f : zero.sample_f(pts, rng)) EXPECT_EQ(f, Complex(0.0, 0.0));
  for (const auto& g : zero.sample_g(pts, rng)) EXPECT_EQ(g, Complex(1.0, 0.0));
  const LimitObject iid = LimitObject::from_profile(build_iid(8), Complex(1.0, 0.0));
  const std::vector<Complex> origin{Complex(0.0, 0.0)};
  EXPECT_EQ(iid.sample_f(origin, rng)[0], Complex(0.0, 0.0));
  EXPECT_EQ(iid.sample_g(origin, rng)[0], Complex(1.0, 0.0));
  const std::vector<Complex> outside{Complex(0.99, 0.0)};
  EXPECT_THROW(iid.sample_f(outside, rng), Error);
}

TEST(SampleF, IidVarianceAtHalf) {
  const LimitObject limit = LimitObject::from_profile(build_iid(16), Complex(0.0, 0.0));
  const int kk = limit.required_terms();
  double series = 0.0;
  for (int k = 1; k <= kk; ++k) series += std::pow(0.25, k) / k;
  double tail = 0.0;
  for (int k = kk + 1; k < 2000; ++k) tail += std::pow(0.25, k) / k;
  EXPECT_NEAR(series, -std::log(0.75) - tail, 1e-15);
  Rng rng(77);
  const std::vector<Complex> pts{Complex(0.5, 0.0)};
  std::vector<Complex> draws(100000);
  for (auto& d : draws) d = limit.sample_f(pts, rng)[0];
  const Summary s = summarize(draws);
  EXPECT_NEAR(s.mean_abs2, series, 3.0 * s.se_abs2);
}

TEST(SampleF, VarianceIsLogDeterminant) {
  const VarianceProfile s = normalized_kernel_profile(30);
  const LimitObject limit = LimitObject::from_profile(s, Complex(1.0, 0.0));
  const Complex z(0.5, 0.4);
  const double expected = -std::log(eval_det(s.to_dense(), Complex(std::norm(z), 0.0)).real());
  Rng rng(5);
  const std::vector<Complex> pts{z};
  std::vector<Complex> draws(100000);
  for (auto& d : draws) d = limit.sample_f(pts, rng)[0];
  const Summary sum = summarize(draws);
  EXPECT_NEAR(sum.mean_abs2, expected, 3.0 * sum.se_abs2 + 1e-10);
}

TEST(SampleF, SharedDrawAcrossPoints) {
  const LimitObject limit = LimitObject::from_profile(build_iid(8), Complex(1.0, 0.0));
  Rng a(9), b(9);
  const std::vector<Complex> both{Complex(0.2, 0.0), Complex(0.6, 0.1)};
  const std::vector<Complex> second{Complex(0.6, 0.1)};
  EXPECT_EQ(limit.sample_f(both, a)[1], limit.sample_f(second, b)[0]);
}

TEST(SampleG, MeanIsOneForIidRademacher) {
  const LimitObject limit = LimitObject::from_profile(build_iid(100), pseudo_moment(NoiseModel::rademacher()));
  Rng rng(123);
  const std::vector<Complex> pts{Complex(0.5, 0.0)};
  std::vector<double> re;
  re.reserve(100000);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = limit.sample_g(pts, rng)[0].real();
    re.push_back(v);
    mean += v / 100000.0;
  }
  double var = 0.0;
  for (double v : re) var += (v - mean) * (v - mean) / (re.size() - 1.0);
  EXPECT_NEAR(mean, 1.0, 3.0 * std::sqrt(var / re.size()));
}

TEST(MeanTraces, OddZeroEvenFormula) {
  const LimitObject iid = LimitObject::from_profile(build_iid(12), Complex(1.0, 0.0));
  const auto m = iid.mean_traces(4);
  EXPECT_EQ(m[0], Complex(0.0, 0.0));
  EXPECT_NEAR(m[1].real(), 1.0, 1e-14);
  EXPECT_EQ(m[2], Complex(0.0, 0.0));
  const LimitObject ginibre = LimitObject::from_profile(build_iid(12), Complex(0.0, 0.0));
  EXPECT_EQ(ginibre.mean_traces(2)[1], Complex(0.0, 0.0));
  const LimitObject small(std::vector<double>{0.5, 0.25}, Complex(0.5, 0.0));
  EXPECT_NEAR(small.mean_traces(4)[3].real(), 0.25 * 0.25, 1e-15);
  try {
    small.mean_traces(5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_input);
  }
}
