#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "vprm/charpoly.hpp"
#include "vprm/noise.hpp"
#include "vprm/profile.hpp"
#include "vprm/sampler.hpp"
#include "vprm/spectra.hpp"

using namespace vprm;

namespace {

CMatrix random_complex(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  CMatrix x(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) x(i, j) = Complex(normal(rng), normal(rng)) / std::sqrt(2.0 * n);
  return x;
}

bool contains(const std::vector<Complex>& values, Complex target, double tol) {
  return std::any_of(values.begin(), values.end(), [&](Complex v) { return std::abs(v - target) <= tol; });
}

}  // namespace

TEST(Eigenvalues, Diagonal) {
  CMatrix d = CMatrix::Zero(3, 3);
  d.diagonal() << Complex(1, 0), Complex(0, 2), Complex(-3, 0);
  const Spectrum s = eigenvalues_dense(d);
  ASSERT_EQ(s.eigenvalues.size(), 3u);
  EXPECT_TRUE(s.converged);
  for (Complex v : {Complex(1, 0), Complex(0, 2), Complex(-3, 0)}) EXPECT_TRUE(contains(s.eigenvalues, v, 1e-14));
  EXPECT_DOUBLE_EQ(s.radius, 3.0);
}

TEST(Eigenvalues, CompanionOfZSquaredMinusOne) {
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  const Spectrum s = eigenvalues_dense(c);
  EXPECT_TRUE(contains(s.eigenvalues, Complex(1, 0), 1e-14));
  EXPECT_TRUE(contains(s.eigenvalues, Complex(-1, 0), 1e-14));
}

TEST(Eigenvalues, JordanBlockAndZero) {
  Matrix j(2, 2);
  j << 0, 1, 0, 0;
  const Spectrum s = eigenvalues_dense(j);
  EXPECT_EQ(s.eigenvalues.size(), 2u);
  EXPECT_EQ(s.radius, 0.0);
  EXPECT_EQ(spectral_radius(j), 0.0);
  EXPECT_EQ(spectral_radius(Matrix::Zero(4, 4)), 0.0);
}

TEST(Eigenvalues, RejectsBadShapes) {
  EXPECT_THROW(eigenvalues_dense(Matrix(2, 3)), Error);
  EXPECT_THROW(eigenvalues_dense(Matrix(0, 0)), Error);
}

TEST(Eigenvalues, TracePreservation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const CMatrix x = random_complex(40, seed) * 3.0;
    Complex sum = 0.0;
    for (const auto& l : eigenvalues_dense(x).eigenvalues) sum += l;
    EXPECT_LE(std::abs(sum - x.trace()), 1e-8 * (1.0 + std::abs(x.trace())));
  }
}

TEST(Eigenvalues, SimilarityInvariance) {
  const CMatrix x = random_complex(100, 11);
  const CMatrix u = Eigen::HouseholderQR<CMatrix>(random_complex(100, 12)).householderQ();
  EXPECT_NEAR(spectral_radius(CMatrix(u.adjoint() * x * u)), spectral_radius(x), 1e-8);
}

TEST(Eigenvalues, DeterminantConsistency) {
  const CMatrix x = CMatrix::Identity(50, 50) + 0.5 * random_complex(50, 13);
  Complex product = 1.0;
  for (const auto& l : eigenvalues_dense(x).eigenvalues) product *= l;
  const Complex det = x.partialPivLu().determinant();
  EXPECT_LE(std::abs(product - det) / std::abs(det), 1e-6);
}

TEST(Eigenvalues, RealInputKeepsConjugatePairs) {
  Matrix r(2, 2);
  r << 0, -1, 1, 0;
  const Spectrum s = eigenvalues_dense(r);
  EXPECT_TRUE(contains(s.eigenvalues, Complex(0, 1), 1e-14));
  EXPECT_TRUE(contains(s.eigenvalues, Complex(0, -1), 1e-14));
}

TEST(MinModulus, ConstantAndLinear) {
  EXPECT_EQ(min_modulus_on_disk([](Complex) { return Complex(1.0, 0.0); }, 0.5), 1.0);
  EXPECT_NEAR(min_modulus_on_disk([](Complex z) { return 1.0 - z; }, 0.5), 0.5, 1e-14);
  EXPECT_THROW(min_modulus_on_disk([](Complex) { return Complex(1.0, 0.0); }, 1.0), Error);
  EXPECT_THROW(min_modulus_on_disk([](Complex) { return Complex(1.0, 0.0); }, 0.5, 1), Error);
}

TEST(MinModulus, AgreesWithEigensolverOnConfinement) {
  const Index n = 200;
  const double r = 1.0 / 1.2;
  const VarianceProfile s = build_iid(n);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    Rng rng = make_stream(17, static_cast<std::uint64_t>(t));
    const RealSample x = sample_matrix_as<double>(s, NoiseModel::rademacher(), rng);
    const auto form = hessenberg_reduce(x.dense());
    const double m = min_modulus_on_disk([&](Complex z) { return eval_det_hessenberg(form, z); }, r, 16, 64);
    const bool inside = spectral_radius(x.dense()) < 1.2;
    agree += ((m > 0.0) == inside) ? 1 : 0;
  }
  EXPECT_GE(agree, 95);
}

TEST(SpectrumCsv, Layout) {
  Spectrum s;
  s.eigenvalues = {Complex(1.0, -2.0)};
  s.radius = std::sqrt(5.0);
  std::ostringstream os;
  write_spectrum_csv(os, s);
  EXPECT_EQ(os.str().substr(0, 13), "re,im\n1,-2\n# ");
  EXPECT_NE(os.str().find("converged=1"), std::string::npos);
}
