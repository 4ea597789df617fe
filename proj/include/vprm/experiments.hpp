#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vprm/charpoly.hpp"
#include "vprm/core.hpp"
#include "vprm/fredholm.hpp"
#include "vprm/limit.hpp"
#include "vprm/noise.hpp"
#include "vprm/parallel.hpp"
#include "vprm/permanent.hpp"
#include "vprm/profile.hpp"
#include "vprm/profile_spec.hpp"
#include "vprm/rng.hpp"
#include "vprm/sampler.hpp"
#include "vprm/spectra.hpp"
#include "vprm/stats.hpp"

namespace vprm {

/// Fully resolved inputs of one experiment. Thread count is deliberately absent:
/// it never changes a result.
struct ExperimentConfig {
  std::string kind;               // confinement | second-moment | trace-moments | equivalence | sparse-traces
  std::string profile = "iid:8";  // profile spec
  std::string profile_small;      // equivalence: the smaller size n < n'
  std::string noise = "rademacher";
  Index n = 0;                    // filled from the profile
  Index trials = 100;
  Index limit_trials = 0;         // equivalence: draws of g (0 means `trials`)
  std::uint64_t seed = 1;
  double epsilon = 0.2;
  double delta = 0.05;
  double tail_tol = 1e-10;
  std::vector<Complex> z_points{Complex(0.5, 0.0)};
  int kmax = 2;
  std::string center = "one";     // confinement threshold center: one | sqrt-rho
  int det_grid = 16;              // gamma grid size for per-profile assumption checks
  Index n_quad = 400;             // sparse-traces: quadrature for the operator targets
  double max_frequency = 0.02;    // confinement pass threshold
  double tolerance = 0.15;        // sparse-traces relative tolerance
};

/// Named columns of doubles, one row per trial (or per z point / k).
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    detail::require(it != columns.end(), Errc::parse_error, "table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }

  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  bool operator==(const Table&) const = default;
};

struct ExperimentRecord {
  ExperimentConfig config;
  std::map<std::string, Table> outputs;  // per-trial data plus deterministic references
  std::map<std::string, Table> summary;  // "main" has one row per z point or k
  std::map<std::string, double> scalars;  // frequencies, pass flags (0/1), distances
};

namespace detail {

enum Stream : std::uint64_t { profile_stream = 1, matrix_stream = 2, limit_stream = 3, small_stream = 4 };

inline double zscore(double value, double target, double se) {
  const double diff = value - target;
  const double floor = 1e-15 * std::max(1.0, std::abs(target));
  return diff / std::max(se, floor);
}

inline double flag(bool b) { return b ? 1.0 : 0.0; }

inline std::string z_suffix(std::size_t j) { return "_" + std::to_string(j); }

inline NoiseModel checked_noise(const ExperimentConfig& c) { return NoiseModel::parse(c.noise); }

inline void check_common(ExperimentConfig& c) {
  require(c.trials >= 2, Errc::invalid_argument, "experiments need at least 2 trials");
  require(c.epsilon > 0.0 && c.epsilon < 1.0, Errc::invalid_argument, "epsilon must lie in (0, 1)");
  require(c.delta > 0.0 && c.delta < 1.0, Errc::invalid_argument, "delta must lie in (0, 1)");
  c.n = ProfileSpec::parse(c.profile).size();
  checked_noise(c);
}

template <typename Scalar>
Complex q_at(const SampledMatrix<Scalar>& x, Complex z) {
  return eval_det(x.to_dense(), z);
}

inline std::vector<Complex> q_values(const AnySample& x, const std::vector<Complex>& zs) {
  return std::visit(
      [&](const auto& m) {
        std::vector<Complex> out;
        out.reserve(zs.size());
        if (m.is_sparse()) {
          const auto dense = m.to_dense();
          for (const auto& z : zs) out.push_back(eval_det(dense, z));
        } else {
          for (const auto& z : zs) out.push_back(eval_det(m.dense(), z));
        }
        return out;
      },
      x);
}

inline double sample_radius(const AnySample& x, bool& converged) {
  return std::visit(
      [&](const auto& m) {
        const Spectrum s = eigenvalues_dense(m.to_dense());
        converged = s.converged;
        return s.radius;
      },
      x);
}

inline double safe_log_abs(Complex v) { return std::log(std::max(std::abs(v), std::numeric_limits<double>::min())); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Summaries: pure functions of config + outputs.

namespace detail {

inline void summarize_confinement(ExperimentRecord& r) {
  const Table& trials = r.outputs.at("trials");
  const double threshold = r.outputs.at("reference").values("threshold").at(0);
  const auto rho = trials.values("rho");
  const auto converged = trials.values("converged");
  const bool random = std::find(trials.columns.begin(), trials.columns.end(), "assumptions_pass") != trials.columns.end();
  const std::vector<double> pass = random ? trials.values("assumptions_pass") : std::vector<double>(rho.size(), 1.0);
  double ok = 0, hits = 0, low = 0, cond = 0, cond_hits = 0, failures = 0;
  std::vector<double> good;
  for (std::size_t t = 0; t < rho.size(); ++t) {
    if (converged[t] == 0.0) {
      ++failures;
      continue;
    }
    ++ok;
    good.push_back(rho[t]);
    if (rho[t] >= threshold) ++hits;
    if (rho[t] <= 0.5) ++low;
    if (pass[t] != 0.0) {
      ++cond;
      if (rho[t] >= threshold) ++cond_hits;
    }
  }
  r.summary.clear();
  r.scalars.clear();
  r.scalars["threshold"] = threshold;
  r.scalars["trials_converged"] = ok;
  r.scalars["nonconverged"] = failures;
  r.scalars["frequency"] = ok > 0 ? hits / ok : 0.0;
  r.scalars["frequency_low"] = ok > 0 ? low / ok : 0.0;
  r.scalars["conditioned_trials"] = cond;
  r.scalars["conditioned_frequency"] = cond > 0 ? cond_hits / cond : 0.0;
  r.scalars["mean_rho"] = good.empty() ? 0.0 : stats::mean(good);
  r.scalars["max_rho"] = good.empty() ? 0.0 : *std::max_element(good.begin(), good.end());
  r.scalars["pass"] = flag(ok > 0 && hits / ok <= r.config.max_frequency);
  Table main{{"threshold", "frequency", "frequency_low", "mean_rho", "nonconverged"},
             {{threshold, r.scalars["frequency"], r.scalars["frequency_low"], r.scalars["mean_rho"], failures}}};
  r.summary["main"] = std::move(main);
}

inline void summarize_second_moment(ExperimentRecord& r) {
  const Table& trials = r.outputs.at("trials");
  const auto oracle = r.outputs.at("reference").values("oracle");
  Table main{{"z_re", "z_im", "mean_abs2", "se_abs2", "oracle", "zscore", "mean_q_re", "mean_q_im", "zscore_q_re",
              "zscore_q_im"},
             {}};
  double within = 0, q_within = 0;
  const auto& zs = r.config.z_points;
  for (std::size_t j = 0; j < zs.size(); ++j) {
    const auto re = trials.values("q_re" + z_suffix(j));
    const auto im = trials.values("q_im" + z_suffix(j));
    std::vector<double> abs2(re.size());
    for (std::size_t t = 0; t < re.size(); ++t) abs2[t] = re[t] * re[t] + im[t] * im[t];
    const double m = stats::mean(abs2), se = stats::standard_error(abs2);
    const double z = zscore(m, oracle[j], se);
    const double zr = zscore(stats::mean(re), 1.0, stats::standard_error(re));
    const double zi = zscore(stats::mean(im), 0.0, stats::standard_error(im));
    if (std::abs(z) <= 3.0) ++within;
    if (std::abs(zr) <= 3.0 && std::abs(zi) <= 3.0) ++q_within;
    main.rows.push_back({zs[j].real(), zs[j].imag(), m, se, oracle[j], z, stats::mean(re), stats::mean(im), zr, zi});
  }
  const double points = static_cast<double>(zs.size());
  r.summary.clear();
  r.scalars.clear();
  r.summary["main"] = std::move(main);
  r.scalars["fraction_within_3se"] = within / points;
  r.scalars["fraction_mean_q_within_3se"] = q_within / points;
  r.scalars["pass"] = flag(within / points >= 0.9);
  r.scalars["mean_q_pass"] = flag(q_within / points >= 0.9);
}

inline void summarize_trace_moments(ExperimentRecord& r) {
  const Table& trials = r.outputs.at("trials");
  const Table& ref = r.outputs.at("reference");
  const auto m_re = ref.values("m_re"), m_im = ref.values("m_im"), target = ref.values("k_tr_sk");
  Table main{{"k", "mean_re", "mean_im", "se_re", "se_im", "m_re", "m_im", "zscore_re", "zscore_im", "second_moment",
              "second_moment_se", "k_tr_sk", "relative_error"},
             {}};
  const int kmax = r.config.kmax;
  std::vector<std::vector<double>> centred(static_cast<std::size_t>(kmax));
  bool means_ok = true;
  for (int k = 1; k <= kmax; ++k) {
    const std::size_t i = static_cast<std::size_t>(k - 1);
    const auto re = trials.values("tr_re_" + std::to_string(k));
    const auto im = trials.values("tr_im_" + std::to_string(k));
    std::vector<double> dev2(re.size());
    for (std::size_t t = 0; t < re.size(); ++t)
      dev2[t] = (re[t] - m_re[i]) * (re[t] - m_re[i]) + (im[t] - m_im[i]) * (im[t] - m_im[i]);
    centred[i] = re;
    const double zr = zscore(stats::mean(re), m_re[i], stats::standard_error(re));
    const double zi = zscore(stats::mean(im), m_im[i], stats::standard_error(im));
    means_ok = means_ok && std::abs(zr) <= 3.0 && std::abs(zi) <= 3.0;
    const double sm = stats::mean(dev2);
    main.rows.push_back({static_cast<double>(k), stats::mean(re), stats::mean(im), stats::standard_error(re),
                         stats::standard_error(im), m_re[i], m_im[i], zr, zi, sm, stats::standard_error(dev2),
                         target[i], target[i] > 0 ? std::abs(sm - target[i]) / target[i] : 0.0});
  }
  Table corr{{"j", "k", "correlation", "zscore"}, {}};
  const double n = static_cast<double>(trials.rows.size());
  for (int j = 1; j <= kmax; ++j)
    for (int k = j + 1; k <= kmax; ++k) {
      const auto& a = centred[static_cast<std::size_t>(j - 1)];
      const auto& b = centred[static_cast<std::size_t>(k - 1)];
      const double ma = stats::mean(a), mb = stats::mean(b);
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t t = 0; t < a.size(); ++t) {
        sab += (a[t] - ma) * (b[t] - mb);
        saa += (a[t] - ma) * (a[t] - ma);
        sbb += (b[t] - mb) * (b[t] - mb);
      }
      const double c = saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
      corr.rows.push_back({static_cast<double>(j), static_cast<double>(k), c, c * std::sqrt(n)});
    }
  r.summary.clear();
  r.scalars.clear();
  r.summary["main"] = std::move(main);
  r.summary["correlations"] = std::move(corr);
  r.scalars["means_pass"] = flag(means_ok);
}

inline void summarize_equivalence(ExperimentRecord& r) {
  const auto& zs = r.config.z_points;
  const bool two_sizes = r.outputs.count("q_small") > 0;
  Table main{{"z_re", "z_im", "mean_log_q", "mean_log_g", "mean_zscore", "var_log_q", "var_log_g", "var_zscore",
              "ks_large", "ks_small"},
             {}};
  bool pass = true, shrink = true;
  double ks_large_max = 0.0;
  for (std::size_t j = 0; j < zs.size(); ++j) {
    const auto logs = [&](const std::string& table) {
      const Table& t = r.outputs.at(table);
      const auto re = t.values("re" + z_suffix(j)), im = t.values("im" + z_suffix(j));
      std::vector<double> out(re.size());
      for (std::size_t i = 0; i < re.size(); ++i) out[i] = safe_log_abs(Complex(re[i], im[i]));
      return out;
    };
    const auto lq = logs("q_large"), lg = logs("g_large");
    const double mq = stats::mean(lq), mg = stats::mean(lg);
    const double vq = stats::variance(lq), vg = stats::variance(lg);
    const double mean_se = std::hypot(stats::standard_error(lq), stats::standard_error(lg));
    const double var_se = std::hypot(stats::variance_standard_error(lq), stats::variance_standard_error(lg));
    const double mz = zscore(mq, mg, mean_se), vz = zscore(vq, vg, var_se);
    const double ks_large = stats::ks_statistic(lq, lg);
    double ks_small = 0.0;
    if (two_sizes) {
      ks_small = stats::ks_statistic(logs("q_small"), logs("g_small"));
      shrink = shrink && ks_large < ks_small;
    }
    ks_large_max = std::max(ks_large_max, ks_large);
    pass = pass && std::abs(mz) <= 3.0 && std::abs(vz) <= 3.0;
    main.rows.push_back({zs[j].real(), zs[j].imag(), mq, mg, mz, vq, vg, vz, ks_large, ks_small});
  }
  r.summary.clear();
  r.scalars.clear();
  r.summary["main"] = std::move(main);
  r.scalars["moments_pass"] = flag(pass);
  r.scalars["ks_shrinks"] = flag(two_sizes && shrink);
  r.scalars["ks_large_max"] = ks_large_max;
}

inline void summarize_sparse_traces(ExperimentRecord& r) {
  const Table& draws = r.outputs.at("trials");
  const auto target = r.outputs.at("reference").values("target");
  Table main{{"k", "mean", "sd", "se", "target", "relative_error", "pass"}, {}};
  bool all = true;
  for (int k = 1; k <= r.config.kmax; ++k) {
    const auto t = draws.values("tr_" + std::to_string(k));
    const double m = stats::mean(t);
    const double tk = target[static_cast<std::size_t>(k - 1)];
    const double rel = tk != 0.0 ? std::abs(m - tk) / std::abs(tk) : std::abs(m);
    const bool ok = rel <= r.config.tolerance;
    all = all && ok;
    main.rows.push_back({static_cast<double>(k), m, std::sqrt(stats::variance(t)), stats::standard_error(t), tk, rel,
                         flag(ok)});
  }
  const auto row_max = draws.values("max_row_sum");
  r.summary.clear();
  r.scalars.clear();
  r.summary["main"] = std::move(main);
  r.scalars["pass"] = flag(all);
  r.scalars["max_row_sum"] = *std::max_element(row_max.begin(), row_max.end());
}

}  // namespace detail

/// Recomputes `summary` and `scalars` from the persisted per-trial outputs.
inline void summarize(ExperimentRecord& r) {
  const std::string& k = r.config.kind;
  if (k == "confinement") return detail::summarize_confinement(r);
  if (k == "second-moment") return detail::summarize_second_moment(r);
  if (k == "trace-moments") return detail::summarize_trace_moments(r);
  if (k == "equivalence") return detail::summarize_equivalence(r);
  if (k == "sparse-traces") return detail::summarize_sparse_traces(r);
  throw Error(Errc::invalid_argument, "unknown experiment kind '" + k + "'");
}

// ---------------------------------------------------------------------------
// Runs. Trial t always draws from make_stream(seed, stream, t), so results do
// not depend on `threads`.

/// Frequency of [rho(X) >= threshold] with threshold 1 + epsilon, or
/// sqrt(rho(S)) + epsilon for center = sqrt-rho. Random profiles are redrawn per
/// trial and their assumption flags recorded.
inline ExperimentRecord run_confinement(ExperimentConfig c, int threads = 1) {
  c.kind = "confinement";
  detail::check_common(c);
  detail::require(c.center == "one" || c.center == "sqrt-rho", Errc::invalid_argument,
                  "center must be `one` or `sqrt-rho`");
  const ProfileSpec spec = ProfileSpec::parse(c.profile);
  const NoiseModel noise = detail::checked_noise(c);
  ExperimentRecord r;
  r.config = c;
  std::optional<VarianceProfile> fixed;
  double threshold = 1.0 + c.epsilon;
  Table ref{{"threshold", "profile_rho"}, {}};
  double profile_rho = std::numeric_limits<double>::quiet_NaN();
  if (!spec.is_random()) {
    fixed = spec.build();
    profile_rho = perron_radius(*fixed).radius;
    if (c.center == "sqrt-rho") threshold = std::sqrt(profile_rho) + c.epsilon;
  } else {
    detail::require(c.center == "one", Errc::invalid_argument, "sqrt-rho centering needs a deterministic profile");
    profile_rho = 0.0;
  }
  ref.rows.push_back({threshold, profile_rho});
  r.outputs["reference"] = std::move(ref);

  const auto count = static_cast<std::size_t>(c.trials);
  std::vector<std::vector<double>> rows(count);
  AssumptionThresholds thresholds;
  thresholds.epsilon = c.epsilon;
  thresholds.grid_size = c.det_grid;
  parallel_for(count, threads, [&](std::size_t t) {
    std::vector<double> row{static_cast<double>(t)};
    std::optional<VarianceProfile> drawn;
    if (!fixed) {
      Rng prng = make_stream(c.seed, detail::profile_stream, t);
      drawn = spec.build(prng);
    }
    const VarianceProfile& s = fixed ? *fixed : *drawn;
    Rng rng = make_stream(c.seed, detail::matrix_stream, t);
    const AnySample x = sample_matrix(s, noise, rng, c.seed);
    bool converged = false;
    const double rho = detail::sample_radius(x, converged);
    row.push_back(rho);
    row.push_back(detail::flag(converged));
    if (!fixed) {
      const AssumptionReport a = check_assumptions(s, thresholds);
      row.insert(row.end(), {a.max_row_l1, a.perron_radius, std::isnan(a.min_det) ? 0.0 : a.min_det, detail::flag(a.row_sum_ok),
                             detail::flag(a.entry_ok), detail::flag(a.det_ok), detail::flag(a.perron_ok),
                             detail::flag(a.all_pass())});
    }
    rows[t] = std::move(row);
  });
  Table trials{{"trial", "rho", "converged"}, std::move(rows)};
  if (!fixed)
    trials.columns.insert(trials.columns.end(), {"max_row_sum", "profile_rho", "min_det", "row_sum_ok", "entry_ok",
                                                 "det_ok", "perron_ok", "assumptions_pass"});
  r.outputs["trials"] = std::move(trials);
  summarize(r);
  return r;
}

/// Monte Carlo E|q(z)|^2 against perm(I + |z|^2 S), and E q(z) against 1.
inline ExperimentRecord run_second_moment(ExperimentConfig c, int threads = 1) {
  c.kind = "second-moment";
  detail::check_common(c);
  const ProfileSpec spec = ProfileSpec::parse(c.profile);
  detail::require(!spec.is_random(), Errc::invalid_argument, "second-moment needs a deterministic profile");
  detail::require(!c.z_points.empty(), Errc::invalid_argument, "second-moment needs z points");
  const VarianceProfile s = spec.build();
  detail::require(s.size() <= kRyserMaxDim, Errc::size_limit, "second-moment oracle is limited to n <= 24");
  const NoiseModel noise = detail::checked_noise(c);
  ExperimentRecord r;
  r.config = c;
  Table ref{{"z_re", "z_im", "oracle"}, {}};
  for (const auto& z : c.z_points) ref.rows.push_back({z.real(), z.imag(), second_moment_oracle(s, z)});
  r.outputs["reference"] = std::move(ref);

  const auto count = static_cast<std::size_t>(c.trials);
  std::vector<std::vector<double>> rows(count);
  parallel_for(count, threads, [&](std::size_t t) {
    Rng rng = make_stream(c.seed, detail::matrix_stream, t);
    const std::vector<Complex> q = detail::q_values(sample_matrix(s, noise, rng, c.seed), c.z_points);
    std::vector<double> row{static_cast<double>(t)};
    for (const auto& v : q) row.insert(row.end(), {v.real(), v.imag()});
    rows[t] = std::move(row);
  });
  Table trials{{"trial"}, std::move(rows)};
  for (std::size_t j = 0; j < c.z_points.size(); ++j)
    trials.columns.insert(trials.columns.end(), {"q_re" + detail::z_suffix(j), "q_im" + detail::z_suffix(j)});
  r.outputs["trials"] = std::move(trials);
  summarize(r);
  return r;
}

/// tr X^k for k = 1..kmax against the means m_k and the variance scale k tr S^k.
inline ExperimentRecord run_trace_moments(ExperimentConfig c, int threads = 1) {
  c.kind = "trace-moments";
  detail::check_common(c);
  detail::require(c.kmax >= 1 && c.kmax <= 8, Errc::invalid_argument, "trace-moments needs 1 <= kmax <= 8");
  const ProfileSpec spec = ProfileSpec::parse(c.profile);
  detail::require(!spec.is_random(), Errc::invalid_argument, "trace-moments needs a deterministic profile");
  const VarianceProfile s = spec.build();
  const NoiseModel noise = detail::checked_noise(c);
  ExperimentRecord r;
  r.config = c;
  const std::vector<double> tr = trace_powers(s, c.kmax);
  const Complex pseudo = noise.pseudo_moment();
  Table ref{{"k", "m_re", "m_im", "k_tr_sk"}, {}};
  for (int k = 1; k <= c.kmax; ++k) {
    const Complex m = k % 2 == 1 ? Complex(0.0, 0.0) : std::pow(pseudo, k / 2) * tr[static_cast<std::size_t>(k / 2 - 1)];
    ref.rows.push_back({static_cast<double>(k), m.real(), m.imag(), k * tr[static_cast<std::size_t>(k - 1)]});
  }
  r.outputs["reference"] = std::move(ref);

  const auto count = static_cast<std::size_t>(c.trials);
  std::vector<std::vector<double>> rows(count);
  parallel_for(count, threads, [&](std::size_t t) {
    Rng rng = make_stream(c.seed, detail::matrix_stream, t);
    const AnySample x = sample_matrix(s, noise, rng, c.seed);
    std::vector<double> row{static_cast<double>(t)};
    std::visit(
        [&](const auto& m) {
          std::vector<Complex> traces;
          if (c.kmax <= 2) {
            traces.emplace_back(m.trace());
            if (c.kmax == 2) traces.emplace_back(m.trace_square());
          } else {
            traces = trace_powers_x(m.to_dense(), c.kmax);
          }
          for (const auto& v : traces) row.insert(row.end(), {v.real(), v.imag()});
        },
        x);
    rows[t] = std::move(row);
  });
  Table trials{{"trial"}, std::move(rows)};
  for (int k = 1; k <= c.kmax; ++k)
    trials.columns.insert(trials.columns.end(), {"tr_re_" + std::to_string(k), "tr_im_" + std::to_string(k)});
  r.outputs["trials"] = std::move(trials);
  summarize(r);
  return r;
}

namespace detail {

inline Table q_ensemble(const VarianceProfile& s, const NoiseModel& noise, const ExperimentConfig& c, Stream stream,
                        int threads) {
  const auto count = static_cast<std::size_t>(c.trials);
  std::vector<std::vector<double>> rows(count);
  parallel_for(count, threads, [&](std::size_t t) {
    Rng rng = make_stream(c.seed, stream, t);
    const std::vector<Complex> q = q_values(sample_matrix(s, noise, rng, c.seed), c.z_points);
    std::vector<double> row{static_cast<double>(t)};
    for (const auto& v : q) row.insert(row.end(), {v.real(), v.imag()});
    rows[t] = std::move(row);
  });
  Table out{{"trial"}, std::move(rows)};
  for (std::size_t j = 0; j < c.z_points.size(); ++j)
    out.columns.insert(out.columns.end(), {"re" + z_suffix(j), "im" + z_suffix(j)});
  return out;
}

// Draw t of g uses make_stream(seed, limit_stream, t) at every size, so the g
// ensembles of the two sizes are coupled (identical when the traces agree).
inline Table g_ensemble(const LimitObject& limit, const ExperimentConfig& c, int threads) {
  const Index draws = c.limit_trials > 0 ? c.limit_trials : c.trials;
  const auto count = static_cast<std::size_t>(draws);
  std::vector<std::vector<double>> rows(count);
  parallel_for(count, threads, [&](std::size_t t) {
    Rng rng = make_stream(c.seed, limit_stream, t);
    const std::vector<Complex> g = limit.sample_g(c.z_points, rng);
    std::vector<double> row{static_cast<double>(t)};
    for (const auto& v : g) row.insert(row.end(), {v.real(), v.imag()});
    rows[t] = std::move(row);
  });
  Table out{{"trial"}, std::move(rows)};
  for (std::size_t j = 0; j < c.z_points.size(); ++j)
    out.columns.insert(out.columns.end(), {"re" + z_suffix(j), "im" + z_suffix(j)});
  return out;
}

}  // namespace detail

/// Ensembles of q_n(z_j) and of g_n(z_j) compared through log-modulus moments
/// and two-sample KS distances, at n and optionally at a smaller n.
inline ExperimentRecord run_equivalence(ExperimentConfig c, int threads = 1) {
  c.kind = "equivalence";
  detail::check_common(c);
  detail::require(!c.z_points.empty(), Errc::invalid_argument, "equivalence needs z points");
  for (const auto& z : c.z_points)
    detail::require(std::abs(z) <= 1.0 - c.delta, Errc::domain_error, "z points must satisfy |z| <= 1 - delta");
  const NoiseModel noise = detail::checked_noise(c);
  ExperimentRecord r;
  r.config = c;
  const auto run_size = [&](const std::string& profile, const char* q_name, const char* g_name,
                            detail::Stream stream) {
    const ProfileSpec spec = ProfileSpec::parse(profile);
    detail::require(!spec.is_random(), Errc::invalid_argument, "equivalence needs deterministic profiles");
    const VarianceProfile s = spec.build();
    const LimitObject limit = LimitObject::from_profile(s, noise.pseudo_moment(), c.delta, c.tail_tol);
    r.outputs[q_name] = detail::q_ensemble(s, noise, c, stream, threads);
    r.outputs[g_name] = detail::g_ensemble(limit, c, threads);
  };
  run_size(c.profile, "q_large", "g_large", detail::matrix_stream);
  if (!c.profile_small.empty()) run_size(c.profile_small, "q_small", "g_small", detail::small_stream);
  summarize(r);
  return r;
}

/// tr S^k over profile draws against the operator traces tr S^k of the kernel.
inline ExperimentRecord run_sparse_traces(ExperimentConfig c, int threads = 1) {
  c.kind = "sparse-traces";
  detail::require(c.trials >= 2, Errc::invalid_argument, "experiments need at least 2 trials");
  detail::require(c.kmax >= 1 && c.kmax <= 4, Errc::invalid_argument, "sparse-traces needs 1 <= kmax <= 4");
  const ProfileSpec spec = ProfileSpec::parse(c.profile);
  c.n = spec.size();
  detail::require(spec.kind() == ProfileSpec::Kind::er || spec.kind() == ProfileSpec::Kind::outdeg,
                  Errc::invalid_argument, "sparse-traces needs an er: or outdeg: profile");
  ExperimentRecord r;
  r.config = c;
  const std::vector<double> target = kernel_trace_powers(*spec.kernel(), c.kmax, c.n_quad);
  Table ref{{"k", "target"}, {}};
  for (int k = 1; k <= c.kmax; ++k) ref.rows.push_back({static_cast<double>(k), target[static_cast<std::size_t>(k - 1)]});
  r.outputs["reference"] = std::move(ref);

  const auto count = static_cast<std::size_t>(c.trials);
  std::vector<std::vector<double>> rows(count);
  parallel_for(count, threads, [&](std::size_t t) {
    Rng rng = make_stream(c.seed, detail::profile_stream, t);
    const VarianceProfile s = spec.build(rng);
    const std::vector<double> tr = trace_powers(s, c.kmax, TraceMethod::accumulate);
    std::vector<double> row{static_cast<double>(t)};
    row.insert(row.end(), tr.begin(), tr.end());
    row.push_back(s.row_sums().maxCoeff());
    row.push_back(static_cast<double>(s.nonzeros()));
    rows[t] = std::move(row);
  });
  Table draws{{"trial"}, std::move(rows)};
  for (int k = 1; k <= c.kmax; ++k) draws.columns.push_back("tr_" + std::to_string(k));
  draws.columns.insert(draws.columns.end(), {"max_row_sum", "nonzeros"});
  r.outputs["trials"] = std::move(draws);
  summarize(r);
  return r;
}

inline ExperimentRecord run_experiment(const ExperimentConfig& c, int threads = 1) {
  if (c.kind == "confinement") return run_confinement(c, threads);
  if (c.kind == "second-moment") return run_second_moment(c, threads);
  if (c.kind == "trace-moments") return run_trace_moments(c, threads);
  if (c.kind == "equivalence") return run_equivalence(c, threads);
  if (c.kind == "sparse-traces") return run_sparse_traces(c, threads);
  throw Error(Errc::invalid_argument, "unknown experiment kind '" + c.kind + "'");
}

// ---------------------------------------------------------------------------
// Persistence: a JSON document with keys in sorted order, one table row per
// line, numbers in shortest round-trip form.

namespace detail {

using Json = nlohmann::json;

inline Json config_to_json(const ExperimentConfig& c) {
  Json z = Json::array();
  for (const auto& p : c.z_points) z.push_back({p.real(), p.imag()});
  return Json{{"kind", c.kind},
              {"profile", c.profile},
              {"profile_small", c.profile_small},
              {"noise", c.noise},
              {"n", c.n},
              {"trials", c.trials},
              {"limit_trials", c.limit_trials},
              {"seed", c.seed},
              {"epsilon", c.epsilon},
              {"delta", c.delta},
              {"tail_tol", c.tail_tol},
              {"z_points", z},
              {"kmax", c.kmax},
              {"center", c.center},
              {"det_grid", c.det_grid},
              {"n_quad", c.n_quad},
              {"max_frequency", c.max_frequency},
              {"tolerance", c.tolerance}};
}

template <typename T>
T field(const Json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  require(it != j.end(), Errc::parse_error, "missing field '" + where + "." + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception& e) {
    throw Error(Errc::parse_error, "bad field '" + where + "." + key + "': " + e.what());
  }
}

inline ExperimentConfig config_from_json(const Json& j) {
  require(j.is_object(), Errc::parse_error, "field 'config' must be an object");
  ExperimentConfig c;
  c.kind = field<std::string>(j, "kind", "config");
  c.profile = field<std::string>(j, "profile", "config");
  c.profile_small = field<std::string>(j, "profile_small", "config");
  c.noise = field<std::string>(j, "noise", "config");
  c.n = field<Index>(j, "n", "config");
  c.trials = field<Index>(j, "trials", "config");
  c.limit_trials = field<Index>(j, "limit_trials", "config");
  c.seed = field<std::uint64_t>(j, "seed", "config");
  c.epsilon = field<double>(j, "epsilon", "config");
  c.delta = field<double>(j, "delta", "config");
  c.tail_tol = field<double>(j, "tail_tol", "config");
  c.kmax = field<int>(j, "kmax", "config");
  c.center = field<std::string>(j, "center", "config");
  c.det_grid = field<int>(j, "det_grid", "config");
  c.n_quad = field<Index>(j, "n_quad", "config");
  c.max_frequency = field<double>(j, "max_frequency", "config");
  c.tolerance = field<double>(j, "tolerance", "config");
  c.z_points.clear();
  for (const auto& p : field<std::vector<std::vector<double>>>(j, "z_points", "config")) {
    require(p.size() == 2, Errc::parse_error, "field 'config.z_points' entries must be [re, im]");
    c.z_points.emplace_back(p[0], p[1]);
  }
  return c;
}

inline std::string number(double v) {
  require(std::isfinite(v), Errc::numerical_failure, "cannot persist a non-finite value");
  return Json(v).dump();
}

inline void write_table(std::ostream& os, const Table& t) {
  os << "{\"columns\": " << Json(t.columns).dump() << ", \"rows\": [";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    os << (i ? ",\n" : "\n") << '[';
    for (std::size_t j = 0; j < t.rows[i].size(); ++j) os << (j ? "," : "") << number(t.rows[i][j]);
    os << ']';
  }
  os << "\n]}";
}

inline void write_tables(std::ostream& os, const std::map<std::string, Table>& tables) {
  os << '{';
  bool first = true;
  for (const auto& [name, table] : tables) {
    os << (first ? "\n" : ",\n") << Json(name).dump() << ": ";
    write_table(os, table);
    first = false;
  }
  os << "\n}";
}

inline Table table_from_json(const Json& j, const std::string& where) {
  require(j.is_object(), Errc::parse_error, "field '" + where + "' must be a table object");
  Table t;
  t.columns = field<std::vector<std::string>>(j, "columns", where);
  t.rows = field<std::vector<std::vector<double>>>(j, "rows", where);
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    require(t.rows[i].size() == t.columns.size(), Errc::parse_error,
            "row " + std::to_string(i) + " of '" + where + "' has " + std::to_string(t.rows[i].size()) +
                " fields, expected " + std::to_string(t.columns.size()));
  return t;
}

inline std::map<std::string, Table> tables_from_json(const Json& j, const std::string& where) {
  require(j.is_object(), Errc::parse_error, "field '" + where + "' must be an object");
  std::map<std::string, Table> out;
  for (const auto& [name, value] : j.items()) out[name] = table_from_json(value, where + "." + name);
  return out;
}

}  // namespace detail

inline void write_record(std::ostream& os, const ExperimentRecord& r) {
  os << "{\n\"config\": " << detail::config_to_json(r.config).dump() << ",\n\"outputs\": ";
  detail::write_tables(os, r.outputs);
  os << ",\n\"scalars\": {";
  bool first = true;
  for (const auto& [name, v] : r.scalars) {
    os << (first ? "" : ", ") << detail::Json(name).dump() << ": " << detail::number(v);
    first = false;
  }
  os << "},\n\"summary\": ";
  detail::write_tables(os, r.summary);
  os << "\n}\n";
}

inline ExperimentRecord read_record(std::istream& is) {
  std::stringstream buffer;
  buffer << is.rdbuf();
  const std::string text = buffer.str();
  detail::Json j;
  try {
    j = detail::Json::parse(text);
  } catch (const detail::Json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(Errc::parse_error, "malformed record at line " + std::to_string(line) + ": " + e.what());
  }
  detail::require(j.is_object(), Errc::parse_error, "record must be a JSON object");
  ExperimentRecord r;
  detail::require(j.contains("config"), Errc::parse_error, "missing field 'config'");
  r.config = detail::config_from_json(j["config"]);
  detail::require(j.contains("outputs") && j.contains("summary") && j.contains("scalars"), Errc::parse_error,
                  "record needs 'outputs', 'scalars' and 'summary'");
  r.outputs = detail::tables_from_json(j["outputs"], "outputs");
  r.summary = detail::tables_from_json(j["summary"], "summary");
  detail::require(j["scalars"].is_object(), Errc::parse_error, "field 'scalars' must be an object");
  for (const auto& [name, value] : j["scalars"].items()) {
    detail::require(value.is_number(), Errc::parse_error, "field 'scalars." + name + "' must be a number");
    r.scalars[name] = value.get<double>();
  }
  return r;
}

inline void persist(const ExperimentRecord& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  detail::require(static_cast<bool>(out), Errc::io_error, "cannot write '" + path + "'");
  write_record(out, r);
  detail::require(static_cast<bool>(out), Errc::io_error, "write to '" + path + "' failed");
}

inline ExperimentRecord load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), Errc::io_error, "cannot open '" + path + "'");
  return read_record(in);
}

/// The "main" summary table as CSV: a header of column names, one row per z point or k.
inline void write_summary_csv(std::ostream& os, const ExperimentRecord& r) {
  const Table& t = r.summary.at("main");
  for (std::size_t j = 0; j < t.columns.size(); ++j) os << (j ? "," : "") << t.columns[j];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << detail::number(row[j]);
    os << '\n';
  }
}

}  // namespace vprm
