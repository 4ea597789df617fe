#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vprm/vprm.hpp"

using namespace vprm;
using Json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

// Accepts `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i`.
Complex parse_complex(const std::string& text) {
  std::string s;
  for (char ch : text)
    if (ch != ' ') s += ch;
  detail::require(!s.empty(), Errc::parse_error, "empty complex number");
  const auto number = [&](const std::string& part) {
    if (part.empty() || part == "+") return 1.0;
    if (part == "-") return -1.0;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    detail::require(used == part.size(), Errc::parse_error, "bad complex number '" + text + "'");
    return v;
  };
  if (s.back() != 'i') return {number(s), 0.0};
  const std::string body = s.substr(0, s.size() - 1);
  // split at the last sign that is not an exponent sign or the leading sign
  std::size_t split = std::string::npos;
  for (std::size_t k = body.size(); k-- > 1;)
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E') {
      split = k;
      break;
    }
  if (split == std::string::npos) return {0.0, number(body)};
  return {number(body.substr(0, split)), number(body.substr(split))};
}

std::vector<Complex> parse_points(const std::vector<std::string>& items) {
  std::vector<Complex> out;
  for (const auto& s : items) out.push_back(parse_complex(s));
  return out;
}

Json complex_json(Complex z) { return Json::array({z.real(), z.imag()}); }

// Relative paths land under $VPRM_OUTPUT_DIR when it is set.
std::string output_path(const std::string& path) {
  const char* dir = std::getenv("VPRM_OUTPUT_DIR");
  if (!dir || !*dir || std::filesystem::path(path).is_absolute()) return path;
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / path).string();
}

std::ofstream open_output(const std::string& path) {
  const std::string resolved = output_path(path);
  std::ofstream out(resolved, std::ios::binary);
  detail::require(static_cast<bool>(out), Errc::io_error, "cannot write '" + resolved + "'");
  return out;
}

VarianceProfile build_profile(const std::string& text, std::uint64_t seed) {
  const ProfileSpec spec = ProfileSpec::parse(text);
  Rng rng = make_stream(seed, 1, 0);
  return spec.build(rng);
}

struct Options {
  std::string profile = "iid:8";
  std::string noise = "rademacher";
  std::uint64_t seed = 1;
  double epsilon = 0.1;
  double delta = 0.05;
  double tail_tol = 1e-10;
  std::vector<std::string> z = {"0.5"};
  int kmax = 4;
  std::string out;
  int threads = 1;
  // check
  double c_s = 2.0;
  double c_s_prime = 2.0;
  int grid = 64;
  // charpoly
  std::string method = "traces";
  // limit
  Index draws = 0;
  // fredholm
  std::string kernel = "prod";
  std::vector<double> gammas = {0.9};
  Index n_quad = 400;
  Index mc_samples = 0;
  // experiment
  ExperimentConfig experiment;
  std::string summary_csv;
};

void print(const Json& j) { std::cout << j.dump(2) << '\n'; }

int run_gen_profile(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  if (!o.out.empty()) {
    std::ofstream out = open_output(o.out);
    write_profile(out, s);
  } else {
    write_profile(std::cout, s);
  }
  return kExitOk;
}

int run_check(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  AssumptionThresholds t;
  t.c_s = o.c_s;
  t.c_s_prime = o.c_s_prime;
  t.epsilon = o.epsilon;
  t.grid_size = o.grid;
  const AssumptionReport a = check_assumptions(s, t);
  print({{"config",
          {{"command", "check"}, {"profile", o.profile}, {"seed", o.seed}, {"epsilon", o.epsilon}, {"c_s", o.c_s},
           {"c_s_prime", o.c_s_prime}, {"grid", o.grid}, {"n", s.size()}}},
         {"report",
          {{"max_row_l1", a.max_row_l1},
           {"max_col_l1", a.max_col_l1},
           {"max_entry_times_k", a.max_entry_times_k},
           {"perron_radius", a.perron_radius},
           {"perron_converged", a.perron_converged},
           {"min_det", a.min_det},
           {"row_sum_ok", a.row_sum_ok},
           {"entry_ok", a.entry_ok},
           {"det_ok", a.det_ok},
           {"perron_ok", a.perron_ok},
           {"all_pass", a.all_pass()}}}});
  return kExitOk;
}

int run_sample(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  Rng rng = make_stream(o.seed, 2, 0);
  const AnySample x = sample_matrix(s, NoiseModel::parse(o.noise), rng, o.seed);
  std::ofstream file;
  if (!o.out.empty()) file = open_output(o.out);
  std::ostream& os = o.out.empty() ? std::cout : file;
  std::visit([&](const auto& m) { write_sample(os, m); }, x);
  return kExitOk;
}

int run_radius(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  Rng rng = make_stream(o.seed, 2, 0);
  const AnySample x = sample_matrix(s, NoiseModel::parse(o.noise), rng, o.seed);
  const Spectrum sp = std::visit([](const auto& m) { return eigenvalues_dense(m.to_dense()); }, x);
  if (!o.out.empty()) {
    std::ofstream out = open_output(o.out);
    write_spectrum_csv(out, sp);
  }
  print({{"config", {{"command", "radius"}, {"profile", o.profile}, {"noise", o.noise}, {"seed", o.seed}, {"n", s.size()}}},
         {"radius", sp.radius},
         {"converged", sp.converged},
         {"eigenvalues_found", sp.eigenvalues.size()}});
  if (!sp.converged) {
    std::cerr << "error: numerical-failure: eigenvalue iteration did not converge\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int run_charpoly(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  Rng rng = make_stream(o.seed, 2, 0);
  const AnySample x = sample_matrix(s, NoiseModel::parse(o.noise), rng, o.seed);
  detail::require(o.method == "traces" || o.method == "bruteforce", Errc::invalid_argument,
                  "--method must be traces or bruteforce");
  const CMatrix dense = std::visit([](const auto& m) { return CMatrix(m.to_dense().template cast<Complex>()); }, x);
  const CharPolyCoeffs c =
      o.method == "traces" ? coeffs_from_traces(trace_powers_x(dense, o.kmax), o.kmax) : coeffs_bruteforce(dense, o.kmax);
  Json coeffs = Json::array();
  for (const auto& p : c.coeffs) coeffs.push_back(complex_json(p));
  Json values = Json::array();
  for (const auto& z : parse_points(o.z))
    values.push_back({{"z", complex_json(z)}, {"q", complex_json(eval_det(dense, z))},
                      {"q_truncated", complex_json(c.evaluate(z))}});
  print({{"config", {{"command", "charpoly"}, {"profile", o.profile}, {"noise", o.noise}, {"seed", o.seed},
                     {"kmax", o.kmax}, {"method", o.method}, {"n", s.size()}}},
         {"coefficients", coeffs},
         {"values", values}});
  return kExitOk;
}

int run_limit(const Options& o) {
  const ProfileSpec spec = ProfileSpec::parse(o.profile);
  const VarianceProfile s = build_profile(o.profile, o.seed);
  const NoiseModel noise = NoiseModel::parse(o.noise);
  const LimitObject limit = LimitObject::from_profile(s, noise.pseudo_moment(), o.delta, o.tail_tol);
  const std::vector<Complex> zs = parse_points(o.z);
  Json kappa = Json::array();
  for (const auto& z : zs) kappa.push_back({{"z", complex_json(z)}, {"kappa", complex_json(limit.kappa(z))}});
  Json means = Json::array();
  for (const auto& m : limit.mean_traces(o.kmax)) means.push_back(complex_json(m));
  if (o.draws > 0) {
    std::ofstream file;
    if (!o.out.empty()) file = open_output(o.out);
    std::ostream& os = o.out.empty() ? std::cout : file;
    os.precision(17);
    os << "draw";
    for (std::size_t j = 0; j < zs.size(); ++j) os << ",re_" << j << ",im_" << j;
    os << '\n';
    for (Index t = 0; t < o.draws; ++t) {
      Rng rng = make_stream(o.seed, 3, static_cast<std::uint64_t>(t));
      os << t;
      for (const auto& g : limit.sample_g(zs, rng)) os << ',' << g.real() << ',' << g.imag();
      os << '\n';
    }
    if (o.out.empty()) return kExitOk;
  }
  Json pts = Json::array();
  for (const auto& z : zs) pts.push_back(complex_json(z));
  print({{"config", {{"command", "limit"}, {"profile", spec.text()}, {"noise", o.noise}, {"seed", o.seed},
                     {"delta", o.delta}, {"tail_tol", o.tail_tol}, {"kmax", o.kmax}, {"z", pts}, {"draws", o.draws}}},
         {"terms", limit.required_terms()},
         {"pseudo", complex_json(limit.pseudo())},
         {"kappa", kappa},
         {"mean_traces", means}});
  return kExitOk;
}

int run_perm_oracle(const Options& o) {
  const VarianceProfile s = build_profile(o.profile, o.seed);
  Json values = Json::array();
  for (const auto& z : parse_points(o.z))
    values.push_back({{"z", complex_json(z)}, {"second_moment", second_moment_oracle(s, z)}});
  Json coeffs = Json::array();
  if (s.size() <= 14 || o.kmax <= 3)
    for (double p : perm_poly_coeffs(s, o.kmax).p) coeffs.push_back(p);
  print({{"config", {{"command", "perm-oracle"}, {"profile", o.profile}, {"seed", o.seed}, {"kmax", o.kmax}, {"n", s.size()}}},
         {"oracle", values},
         {"perm_coefficients", coeffs}});
  return kExitOk;
}

int run_fredholm(const Options& o) {
  const KernelSpec kernel = KernelSpec::parse(o.kernel);
  const std::vector<FredholmRow> rows = fredholm_scan(kernel, o.gammas, o.n_quad);
  if (o.mc_samples == 0) {
    std::ofstream file;
    if (!o.out.empty()) file = open_output(o.out);
    write_fredholm_csv(o.out.empty() ? std::cout : file, rows);
    return kExitOk;
  }
  if (!o.out.empty()) {
    std::ofstream file = open_output(o.out);
    write_fredholm_csv(file, rows);
  }
  Json series = Json::array();
  for (double g : o.gammas) {
    Rng rng = make_stream(o.seed, 5, 0);
    const FredholmSeries f = fredholm_series(kernel, g, o.kmax, o.mc_samples, rng);
    series.push_back({{"gamma", g}, {"value", f.value}, {"mc_error", f.mc_error}, {"tail_bound", f.tail_bound}, {"d", f.d}});
  }
  Json scan = Json::array();
  for (const auto& r : rows) scan.push_back({{"gamma", r.gamma}, {"det", r.det}, {"bound", r.bound}});
  print({{"config", {{"command", "fredholm"}, {"kernel", kernel.to_string()}, {"gamma", o.gammas}, {"n_quad", o.n_quad},
                     {"kmax", o.kmax}, {"mc_samples", o.mc_samples}, {"seed", o.seed}}},
         {"det", scan},
         {"series", series}});
  return kExitOk;
}

int run_experiment_command(Options o, const std::string& kind) {
  ExperimentConfig& c = o.experiment;
  c.kind = kind;
  c.z_points = parse_points(o.z);
  const ExperimentRecord r = run_experiment(c, o.threads);
  std::string path = o.out;
  if (path.empty() && std::getenv("VPRM_OUTPUT_DIR")) path = kind + "-seed" + std::to_string(c.seed) + ".json";
  if (!path.empty()) {
    std::ofstream out = open_output(path);
    write_record(out, r);
    detail::require(static_cast<bool>(out), Errc::io_error, "write failed");
  }
  if (!o.summary_csv.empty()) {
    std::ofstream out = open_output(o.summary_csv);
    write_summary_csv(out, r);
  }
  Json scalars = Json::object();
  for (const auto& [name, v] : r.scalars) scalars[name] = v;
  print({{"config", detail::config_to_json(r.config)},
         {"record", path.empty() ? Json(nullptr) : Json(output_path(path))},
         {"scalars", scalars}});
  return kExitOk;
}

// OpenBLAS reads its core type when the library loads, so the override has to
// be in the environment before the process starts.
void pin_openblas_core(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE") || std::getenv("VPRM_NO_REEXEC")) return;
  __builtin_cpu_init();
  if (!__builtin_cpu_supports("avx2")) return;
  setenv("OPENBLAS_CORETYPE", "Haswell", 1);
  setenv("VPRM_NO_REEXEC", "1", 1);
  execv("/proc/self/exe", argv);
}

}  // namespace

int main(int argc, char** argv) {
  pin_openblas_core(argv);

  CLI::App app{"Variance-profile random matrices: profiles, spectra, limit objects and experiments"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file");
  Options o;

  const auto add_profile = [&](CLI::App* cmd) {
    cmd->add_option("--profile", o.profile, "iid:N | zero:N | block:A:N | blockraw:A:N | kernel:SPEC:N | "
                                            "er:SPEC:N:K | outdeg:SPEC:N:K | file:PATH")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "seed for random profiles and samples")->capture_default_str();
  };
  const auto add_noise = [&](CLI::App* cmd) {
    cmd->add_option("--noise", o.noise, "rademacher | gauss-real | gauss-complex | uniform | pareto:A | trunc:LAW:M")
        ->capture_default_str();
  };
  const auto add_out = [&](CLI::App* cmd, const char* what) { cmd->add_option("--out", o.out, what); };
  const auto add_z = [&](CLI::App* cmd) {
    cmd->add_option("--z", o.z, "evaluation points, e.g. 0.5,0.3+0.4i,0.5i")->delimiter(',')->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-profile", "write a variance profile");
  add_profile(gen);
  add_out(gen, "profile file (stdout if omitted)");

  auto* check = app.add_subcommand("check", "check the profile assumptions");
  add_profile(check);
  check->add_option("--epsilon", o.epsilon, "gamma grid covers [0, 1 - epsilon]")->capture_default_str();
  check->add_option("--cs", o.c_s, "bound on the row/column l1 norm")->capture_default_str();
  check->add_option("--cs-prime", o.c_s_prime, "bound on K * max entry")->capture_default_str();
  check->add_option("--grid", o.grid, "gamma grid size")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "draw X with entries sqrt(s_ij) W_ij");
  add_profile(sample);
  add_noise(sample);
  add_out(sample, "sample file (stdout if omitted)");

  auto* radius = app.add_subcommand("radius", "spectral radius of one sample");
  add_profile(radius);
  add_noise(radius);
  add_out(radius, "spectrum CSV");

  auto* charpoly = app.add_subcommand("charpoly", "coefficients of det(I - zX) for one sample");
  add_profile(charpoly);
  add_noise(charpoly);
  add_z(charpoly);
  charpoly->add_option("--kmax", o.kmax, "number of coefficients")->capture_default_str();
  charpoly->add_option("--method", o.method, "traces | bruteforce")->capture_default_str();

  auto* limit = app.add_subcommand("limit", "kappa, mean traces and draws of the Gaussian limit g");
  add_profile(limit);
  add_noise(limit);
  add_z(limit);
  limit->add_option("--delta", o.delta, "disk margin")->capture_default_str();
  limit->add_option("--tail-tol", o.tail_tol, "series tail tolerance")->capture_default_str();
  limit->add_option("--kmax", o.kmax, "number of mean traces")->capture_default_str();
  limit->add_option("--draws", o.draws, "write this many draws of g as CSV");
  add_out(limit, "CSV file for --draws");

  auto* perm = app.add_subcommand("perm-oracle", "exact E|q(z)|^2 = perm(I + |z|^2 S)");
  add_profile(perm);
  add_z(perm);
  perm->add_option("--kmax", o.kmax, "number of permanent coefficients")->capture_default_str();

  auto* fred = app.add_subcommand("fredholm", "det(I - gamma S) of a kernel");
  fred->add_option("--kernel", o.kernel, "const:c | prod | affine | gauss | min | table:PATH, optionally *FACTOR")
      ->capture_default_str();
  fred->add_option("--gamma", o.gammas, "gamma values")->delimiter(',')->capture_default_str();
  fred->add_option("--n-quad", o.n_quad, "quadrature nodes")->capture_default_str();
  fred->add_option("--kmax", o.kmax, "series terms for --mc-samples")->capture_default_str();
  fred->add_option("--mc-samples", o.mc_samples, "also estimate the d_k series with this many samples");
  fred->add_option("--seed", o.seed, "seed for the series")->capture_default_str();
  add_out(fred, "CSV gamma,det,bound");

  auto* exp = app.add_subcommand("experiment", "seeded Monte Carlo experiments");
  exp->require_subcommand(1);
  ExperimentConfig& c = o.experiment;
  const std::pair<const char*, const char*> kinds[] = {
      {"confinement", "frequency of rho(X) >= threshold"},
      {"second-moment", "E|q(z)|^2 against perm(I + |z|^2 S)"},
      {"trace-moments", "moments of tr X^k against their Gaussian limits"},
      {"equivalence", "log|q(z)| against log|g(z)|, moments and KS distance"},
      {"sparse-traces", "tr S^k of sparse profile draws against the kernel"}};
  for (const auto& [kind, description] : kinds) {
    auto* e = exp->add_subcommand(kind, description);
    e->add_option("--profile", c.profile, "profile spec")->capture_default_str();
    e->add_option("--profile-small", c.profile_small, "equivalence: second, smaller profile");
    e->add_option("--noise", c.noise, "noise law")->capture_default_str();
    e->add_option("--trials", c.trials, "trials")->capture_default_str();
    e->add_option("--limit-trials", c.limit_trials, "equivalence: draws of g (default: --trials)");
    e->add_option("--seed", c.seed, "seed")->capture_default_str();
    e->add_option("--epsilon", c.epsilon, "confinement margin")->capture_default_str();
    e->add_option("--delta", c.delta, "disk margin")->capture_default_str();
    e->add_option("--tail-tol", c.tail_tol, "limit-object tail tolerance")->capture_default_str();
    add_z(e);
    e->add_option("--kmax", c.kmax, "largest trace power")->capture_default_str();
    e->add_option("--center", c.center, "confinement threshold center: one | sqrt-rho")->capture_default_str();
    e->add_option("--det-grid", c.det_grid, "gamma grid for per-trial assumption checks")->capture_default_str();
    e->add_option("--n-quad", c.n_quad, "quadrature for operator traces")->capture_default_str();
    e->add_option("--max-frequency", c.max_frequency, "confinement pass threshold")->capture_default_str();
    e->add_option("--tolerance", c.tolerance, "sparse-traces relative tolerance")->capture_default_str();
    e->add_option("--threads", o.threads, "worker threads (results do not depend on it)")->capture_default_str();
    e->add_option("--out", o.out, "record file (JSON)");
    e->add_option("--summary-csv", o.summary_csv, "summary CSV file");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    if (*gen) return run_gen_profile(o);
    if (*check) return run_check(o);
    if (*sample) return run_sample(o);
    if (*radius) return run_radius(o);
    if (*charpoly) return run_charpoly(o);
    if (*limit) return run_limit(o);
    if (*perm) return run_perm_oracle(o);
    if (*fred) return run_fredholm(o);
    for (auto* sub : exp->get_subcommands())
      if (*sub) return run_experiment_command(o, sub->get_name());
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::numerical_failure ? kExitNumerical : kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitInvalid;
}
