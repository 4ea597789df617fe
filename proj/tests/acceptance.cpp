// Acceptance checks 1-11. Usage: acceptance [N]. Without N every check runs.
// Prints one PASS/FAIL line per check; exits non-zero if any check fails.

#include <quadmath.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vprm/vprm.hpp"

using namespace vprm;

namespace {

using Quad = __float128;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const Table& main_table(const ExperimentRecord& r) { return r.summary.at("main"); }

double cell(const Table& t, std::size_t row, const std::string& col) { return t.rows.at(row).at(t.column(col)); }

// 1. E|q(z)|^2 = perm(I + |z|^2 S) at n = 8.
Outcome criterion_1() {
  ExperimentConfig c;
  c.profile = "iid:8";
  c.noise = "rademacher";
  c.z_points = {Complex(0.3, 0.0), Complex(0.5, 0.0), Complex(0.0, 0.5)};
  c.trials = 200000;
  c.seed = 101;
  const ExperimentRecord r = run_second_moment(c);
  const Table& t = main_table(r);
  bool ok = true;
  std::string detail;
  for (std::size_t j = 0; j < t.rows.size(); ++j) {
    const double z = cell(t, j, "zscore");
    ok = ok && std::abs(z) <= 3.0;
    detail += fmt("z=%g%+gi mean=%.5f perm=%.5f zscore=%.2f; ", cell(t, j, "z_re"), cell(t, j, "z_im"),
                  cell(t, j, "mean_abs2"), cell(t, j, "oracle"), z);
  }
  return {ok, detail};
}

// 2. Newton recursion against principal-minor enumeration.
Outcome criterion_2() {
  std::mt19937_64 gen(202);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int m = 0; m < 50; ++m) {
    const Index n = 1 + m % 10;
    CMatrix x(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) x(i, j) = Complex(normal(gen), normal(gen)) / std::sqrt(2.0 * n);
    const int kmax = static_cast<int>(n);
    const std::vector<Complex> traces = trace_powers_x(x, kmax);
    const CharPolyCoeffs a = coeffs_from_traces(traces, kmax);
    const CharPolyCoeffs b = coeffs_bruteforce(x, kmax);
    for (int k = 0; k < kmax; ++k) {
      const auto i = static_cast<std::size_t>(k);
      worst = std::max(worst, std::abs(a.coeffs[i] - b.coeffs[i]) / std::abs(b.coeffs[i]));
    }
  }
  return {worst <= 1e-9, fmt("max relative coefficient error %.3e over 50 matrices", worst)};
}

// Gaussian elimination with partial pivoting in quad precision.
Quad quad_det(std::vector<std::vector<Quad>> a) {
  const std::size_t n = a.size();
  Quad det = 1;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (fabsq(a[i][k]) > fabsq(a[p][k])) p = i;
    if (p != k) {
      std::swap(a[p], a[k]);
      det = -det;
    }
    det *= a[k][k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const Quad f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
    }
  }
  return det;
}

// 3. det(I - gamma S) = exp(-sum_k gamma^k tr S^k / k) truncated at K = 200,
// evaluated in quad precision because the geometric tail bound sits far below
// double rounding. The double-precision library routines are cross-checked.
Outcome criterion_3() {
  const int kmax = 200;
  const double gamma = 0.9;
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool ok = true;
  double worst_ratio = 0.0, worst_lib = 0.0;
  for (int p = 0; p < 20; ++p) {
    const Index n = 4 + p % 9;
    Matrix m(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) m(i, j) = unit(gen);
    const double target = 0.85 + 0.05 * p / 19.0;
    const double rho0 = perron_radius(VarianceProfile::from_dense(m, static_cast<double>(n))).radius;
    const VarianceProfile s = VarianceProfile::from_dense(m * (target / rho0), static_cast<double>(n));
    const double rho = perron_radius(s).radius;
    ok = ok && rho <= 0.9 + 1e-12;
    const Matrix& d = s.dense_storage();

    std::vector<std::vector<Quad>> sq(n, std::vector<Quad>(n)), power, eye_minus(n, std::vector<Quad>(n));
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        sq[i][j] = d(i, j);
        eye_minus[i][j] = (i == j ? Quad(1) : Quad(0)) - Quad(gamma) * sq[i][j];
      }
    power = sq;
    Quad series = 0, gk = 1;
    for (int k = 1; k <= kmax; ++k) {
      if (k > 1) {
        std::vector<std::vector<Quad>> next(n, std::vector<Quad>(n, 0));
        for (Index i = 0; i < n; ++i)
          for (Index l = 0; l < n; ++l)
            for (Index j = 0; j < n; ++j) next[i][j] += power[i][l] * sq[l][j];
        power.swap(next);
      }
      Quad tr = 0;
      for (Index i = 0; i < n; ++i) tr += power[i][i];
      gk *= gamma;
      series += gk * tr / k;
    }
    const Quad truncated = expq(-series);
    const Quad det = quad_det(eye_minus);
    // |tr S^k| <= n rho^k, so the remainder R obeys |R| <= n x^{K+1} / ((K+1)(1-x)), x = gamma rho.
    const double x = gamma * rho * (1.0 + 1e-12);
    const Quad tail = Quad(n) * powq(x, kmax + 1) / (Quad(kmax + 1) * (1 - Quad(x)));
    const Quad bound = truncated * expm1q(tail);
    const Quad err = fabsq(det - truncated);
    ok = ok && err < bound;
    worst_ratio = std::max(worst_ratio, static_cast<double>(err / bound));

    const double lib_det = det_one_minus_gamma(s, gamma);
    const std::vector<double> tr = trace_powers(s, kmax);
    double lib_series = 0.0, g = 1.0;
    for (int k = 1; k <= kmax; ++k) {
      g *= gamma;
      lib_series += g * tr[static_cast<std::size_t>(k - 1)] / k;
    }
    const double ref = static_cast<double>(det);
    worst_lib = std::max({worst_lib, std::abs(lib_det - ref) / ref, std::abs(std::exp(-lib_series) - ref) / ref});
  }
  ok = ok && worst_lib <= 1e-12;
  return {ok, fmt("max |det - exp(-S_200)| / tail bound = %.3e (quad precision); library vs quad relative %.2e",
                  worst_ratio, worst_lib)};
}

Outcome confinement(const std::string& profile, const std::string& noise, double epsilon, Index trials,
                    double max_frequency, const std::string& center, std::uint64_t seed) {
  ExperimentConfig c;
  c.profile = profile;
  c.noise = noise;
  c.epsilon = epsilon;
  c.trials = trials;
  c.max_frequency = max_frequency;
  c.center = center;
  c.seed = seed;
  const ExperimentRecord r = run_confinement(c);
  const auto& s = r.scalars;
  const bool ok = s.at("pass") != 0.0 && s.at("nonconverged") == 0.0;
  return {ok, fmt("%s %s: threshold %.4f frequency %.3f max rho %.4f nonconverged %g; ", profile.c_str(), noise.c_str(),
                  s.at("threshold"), s.at("frequency"), s.at("max_rho"), s.at("nonconverged"))};
}

// 4. Confinement at n = 1000 for bounded and two-moment noise.
Outcome criterion_4() {
  const Outcome a = confinement("iid:1000", "rademacher", 0.2, 100, 0.02, "one", 404);
  const Outcome b = confinement("iid:1000", "pareto:2.5", 0.2, 100, 0.02, "one", 405);
  return {a.pass && b.pass, a.detail + b.detail};
}

// 5. Block profile A = [[2,1],[1,2]] at pn = 1000.
Outcome criterion_5() {
  const Outcome a = confinement("blockraw:2,1;1,2:250", "rademacher", 0.2, 100, 0.02, "sqrt-rho", 505);
  const VarianceProfile s = ProfileSpec::parse("block:2,1;1,2:250").build();
  bool det_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  for (const double g : uniform_gamma_grid(0.01, 100)) {
    const double margin = det_one_minus_gamma(s, g) - (1.0 - g) * (1.0 - g);
    det_ok = det_ok && margin >= 0.0;
    worst = std::min(worst, margin);
  }
  return {a.pass && det_ok,
          a.detail + fmt("min over gamma in {0,0.01,..,0.99} of det(I - gamma S) - (1-gamma)^2 = %.3e", worst)};
}

// 6. tr X^2 means and the complex-noise second moment at n = 1000.
Outcome criterion_6() {
  bool ok = true;
  std::string detail;
  for (const std::string noise : {"rademacher", "gauss-complex"}) {
    ExperimentConfig c;
    c.profile = "iid:1000";
    c.noise = noise;
    c.trials = 2000;
    c.kmax = 2;
    c.seed = 606;
    const ExperimentRecord r = run_trace_moments(c);
    const Table& t = main_table(r);
    const double zr = cell(t, 1, "zscore_re"), zi = cell(t, 1, "zscore_im");
    ok = ok && std::abs(zr) <= 3.0 && std::abs(zi) <= 3.0;
    detail += fmt("%s: mean tr X^2 = %.4f%+.4fi (m2 %g) zscores %.2f %.2f; ", noise.c_str(), cell(t, 1, "mean_re"),
                  cell(t, 1, "mean_im"), cell(t, 1, "m_re"), zr, zi);
    if (noise == "gauss-complex") {
      const double rel = cell(t, 1, "relative_error");
      ok = ok && rel <= 0.10;
      detail += fmt("E|tr X^2 - m2|^2 = %.4f vs 2 tr S^2 = %.4f (relative %.3f)", cell(t, 1, "second_moment"),
                    cell(t, 1, "k_tr_sk"), rel);
    }
  }
  return {ok, detail};
}

// 7. kappa, sample_z and Var F(0.5).
Outcome criterion_7() {
  const VarianceProfile s = build_iid(200);
  double kappa_err = 0.0;
  for (const Complex tau : {Complex(1.0, 0.0), Complex(0.25, 0.0), Complex(0.0, 0.6)}) {
    const LimitObject limit = LimitObject::from_profile(s, tau, 0.05, 1e-13);
    for (int j = 0; j < 20; ++j) {
      const Complex z = std::polar(0.9 * (j + 1) / 20.0, 2.0 * std::numbers::pi * 0.37 * j);
      kappa_err = std::max(kappa_err, std::abs(limit.kappa(z) - std::sqrt(1.0 - z * z * tau)));
    }
  }
  bool ok = kappa_err <= 1e-10;
  std::string detail = fmt("max |kappa - sqrt(1 - z^2 E W^2)| = %.2e; ", kappa_err);

  const int draws = 100000;
  for (const double tau : {0.0, 0.25, 1.0}) {
    Rng rng = make_stream(707, 1, static_cast<std::uint64_t>(tau * 100));
    std::vector<double> re(draws), im(draws), abs2(draws);
    for (int d = 0; d < draws; ++d) {
      const Complex z = sample_z(Complex(tau, 0.0), rng);
      const Complex z2 = z * z;
      re[static_cast<std::size_t>(d)] = z2.real();
      im[static_cast<std::size_t>(d)] = z2.imag();
      abs2[static_cast<std::size_t>(d)] = std::norm(z);
    }
    const double zr = (stats::mean(re) - tau) / stats::standard_error(re);
    const double zi = (stats::mean(im) - 0.0) / stats::standard_error(im);
    const double za = (stats::mean(abs2) - 1.0) / stats::standard_error(abs2);
    const bool within = std::abs(zr) <= 4.0 && (tau == 1.0 || std::abs(zi) <= 4.0) && std::abs(za) <= 4.0;
    ok = ok && within;
    detail += fmt("tau=%g: E Z^2 = %.4f%+.4fi, E|Z|^2 = %.4f; ", tau, stats::mean(re), stats::mean(im), stats::mean(abs2));
  }

  const LimitObject limit = LimitObject::from_profile(s, Complex(1.0, 0.0), 0.05, 1e-10);
  const int terms = limit.required_terms();
  double tail = 0.0;
  for (int k = terms + 1; k < terms + 2000; ++k) tail += std::pow(0.25, k) / k;
  const double target = -std::log(0.75) - tail;
  Rng rng = make_stream(708, 2, 0);
  const std::vector<Complex> point{Complex(0.5, 0.0)};
  std::vector<double> f(draws);
  for (int d = 0; d < draws; ++d) f[static_cast<std::size_t>(d)] = limit.sample_f(point, rng)[0].real();
  const double var = stats::variance(f);
  const double se = stats::variance_standard_error(f);
  ok = ok && std::abs(var - target) <= 3.0 * se;
  detail += fmt("Var F(0.5) = %.5f vs %.5f (se %.5f, K = %d)", var, target, se, terms);
  return {ok, detail};
}

// 8. log|q_n(0.5)| against log|g_n(0.5)| at n = 1000 and n = 100.
Outcome criterion_8() {
  ExperimentConfig c;
  c.profile = "iid:1000";
  c.profile_small = "iid:100";
  c.noise = "rademacher";
  c.z_points = {Complex(0.5, 0.0)};
  c.trials = 10000;
  c.seed = 808;
  const ExperimentRecord r = run_equivalence(c);
  const Table& t = main_table(r);
  const bool ok = r.scalars.at("moments_pass") != 0.0 && r.scalars.at("ks_shrinks") != 0.0;
  return {ok, fmt("mean %.4f vs %.4f (z %.2f), variance %.4f vs %.4f (z %.2f), KS n=1000 %.4f < n=100 %.4f",
                  cell(t, 0, "mean_log_q"), cell(t, 0, "mean_log_g"), cell(t, 0, "mean_zscore"),
                  cell(t, 0, "var_log_q"), cell(t, 0, "var_log_g"), cell(t, 0, "var_zscore"), cell(t, 0, "ks_large"),
                  cell(t, 0, "ks_small"))};
}

// 9. Nystrom convergence for S(x,y) = xy and exactness for constant kernels.
Outcome criterion_9() {
  const KernelSpec xy = KernelSpec::product();
  const double e200 = std::abs(fredholm_det(xy, 0.9, 200) - 0.7);
  const double e400 = std::abs(fredholm_det(xy, 0.9, 400) - 0.7);
  const double ratio = e400 / e200;
  bool ok = e400 <= 1e-2 && ratio >= 0.5 * 0.75 && ratio <= 0.5 * 1.25;
  double worst = 0.0;
  for (const double c : {0.3, 0.5, 1.0})
    for (const double g : {0.2, 0.5, 0.9})
      for (const Index nq : {16, 50, 200, 400, 1000})
        worst = std::max(worst, std::abs(fredholm_det(KernelSpec::constant(c), g, nq) - (1.0 - g * c)));
  ok = ok && worst <= 1e-12;
  return {ok, fmt("xy: error %.3e at 200, %.3e at 400 (ratio %.3f); constant kernels max error %.2e", e200, e400, ratio,
                  worst)};
}

// 10. Sparse sampling: tr S^2 concentration and ER confinement.
Outcome criterion_10() {
  bool ok = true;
  std::string detail;
  for (const std::string profile : {"er:const1:4000:9", "outdeg:const1:4000:9"}) {
    ExperimentConfig c;
    c.profile = profile;
    c.trials = 20;
    c.kmax = 2;
    c.tolerance = 0.15;
    c.seed = 1010;
    const ExperimentRecord r = run_sparse_traces(c);
    const Table& t = main_table(r);
    ok = ok && cell(t, 1, "pass") != 0.0;
    detail += fmt("%s: mean tr S^2 = %.4f (target %.4f, relative %.3f); ", profile.c_str(), cell(t, 1, "mean"),
                  cell(t, 1, "target"), cell(t, 1, "relative_error"));
  }
  const Outcome conf = confinement("er:const1:2000:log", "rademacher", 0.3, 50, 0.04, "one", 1011);
  return {ok && conf.pass, detail + conf.detail};
}

// 11. Persisted records do not depend on the thread count.
Outcome criterion_11() {
  std::vector<ExperimentConfig> configs(5);
  configs[0].kind = "confinement";
  configs[0].profile = "er:const1:300:log";
  configs[0].trials = 12;
  configs[1].kind = "second-moment";
  configs[1].profile = "iid:8";
  configs[1].trials = 500;
  configs[1].z_points = {Complex(0.3, 0.0), Complex(0.0, 0.5)};
  configs[2].kind = "trace-moments";
  configs[2].profile = "iid:60";
  configs[2].noise = "gauss-complex";
  configs[2].kmax = 4;
  configs[2].trials = 40;
  configs[3].kind = "equivalence";
  configs[3].profile = "iid:60";
  configs[3].profile_small = "iid:20";
  configs[3].trials = 60;
  configs[4].kind = "sparse-traces";
  configs[4].profile = "outdeg:const1:300:5";
  configs[4].trials = 6;
  bool ok = true;
  std::string detail;
  for (auto& c : configs) {
    c.seed = 1111;
    std::ostringstream a, b, d;
    write_record(a, run_experiment(c, 1));
    write_record(b, run_experiment(c, 4));
    write_record(d, run_experiment(c, 3));
    const bool same = a.str() == b.str() && a.str() == d.str();
    ok = ok && same;
    detail += c.kind + (same ? " identical; " : " DIFFERS; ");
  }
  return {ok, detail + "threads 1, 3, 4"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> checks{criterion_1, criterion_2, criterion_3, criterion_4,
                                                     criterion_5, criterion_6, criterion_7, criterion_8,
                                                     criterion_9, criterion_10, criterion_11};
  std::vector<int> selected;
  if (argc > 1) {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > static_cast<int>(checks.size())) {
      std::fprintf(stderr, "usage: acceptance [1-%zu]\n", checks.size());
      return 2;
    }
    selected.push_back(n);
  } else {
    for (int i = 1; i <= static_cast<int>(checks.size()); ++i) selected.push_back(i);
  }
  bool all = true;
  for (const int i : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[static_cast<std::size_t>(i - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s (%.1f s) %s\n", i, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
