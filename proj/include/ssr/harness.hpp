#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "ssr/datagen.hpp"
#include "ssr/estimator.hpp"
#include "ssr/metrics.hpp"
#include "ssr/validation.hpp"

namespace ssr {

enum class Estimator { thresh, norm, mom, oracle, naive };

// Canonical ordering used for CSV rows and tables, independent of the order
// estimators were requested in.
inline constexpr std::array<Estimator, 5> kEstimatorOrder = {
    Estimator::thresh, Estimator::norm, Estimator::mom, Estimator::oracle, Estimator::naive};

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::thresh: return "thresh";
    case Estimator::norm: return "norm";
    case Estimator::mom: return "mom";
    case Estimator::oracle: return "oracle";
    case Estimator::naive: return "naive";
  }
  return "?";
}

inline std::optional<Estimator> estimator_from_string(std::string_view s) {
  for (Estimator e : kEstimatorOrder)
    if (s == to_string(e)) return e;
  return std::nullopt;
}

struct SweepSpec {
  ModelConfig base;      // N or T is overridden per sweep value
  double sigma_x = 1.0;  // time-series sweeps only
  enum class Variable { N, T };
  Variable sweep_variable = Variable::N;
  std::vector<int> sweep_values;
  std::vector<Estimator> estimators;
  int trials = 30;
  double threshold_c0 = 0.5;
  std::string output_path;  // empty: caller handles persistence
  bool emit_raw = false;
  int threads = 0;  // 0: hardware concurrency

  void validate(bool time_series) const {
    if (sweep_values.empty()) throw std::invalid_argument("SweepSpec: sweep_values must be nonempty");
    for (std::size_t i = 1; i < sweep_values.size(); ++i)
      if (sweep_values[i] <= sweep_values[i - 1])
        throw std::invalid_argument("SweepSpec: sweep_values must be strictly increasing");
    for (int v : sweep_values)
      if (v < 1) throw std::invalid_argument("SweepSpec: sweep values must be positive");
    if (trials < 1) throw std::invalid_argument("SweepSpec: trials must be >= 1");
    if (estimators.empty()) throw std::invalid_argument("SweepSpec: no estimators requested");
    if (time_series) {
      for (Estimator e : estimators)
        if (e != Estimator::norm && e != Estimator::mom)
          throw std::invalid_argument("SweepSpec: time-series sweeps support only norm and mom");
      if (!(sigma_x > 0.0)) throw std::invalid_argument("SweepSpec: sigma_x must be > 0");
    }
    if (!(threshold_c0 > 0.0)) throw std::invalid_argument("SweepSpec: threshold_c0 must be > 0");
  }
};

struct SweepRow {
  std::string estimator;  // canonical name, or a caller-supplied label
  std::string kind;
  int d = 0, r = 0, T = 0, N = 0;
  int trials = 0;  // successful trials behind the aggregates
  double mean_sin_theta_op = 0, std_sin_theta_op = 0;
  double mean_param_err = 0, std_param_err = 0;
  std::uint64_t seed = 0;
};

struct RawRow {
  std::string estimator;
  std::string kind;
  int d = 0, r = 0, T = 0, N = 0;
  int trial = 0;
  double sin_theta_op = 0, param_err = 0;
  std::uint64_t seed = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RawRow> raw;   // per successful (estimator, value, trial)
  int failed_cells = 0;      // (estimator × value) cells with zero successful trials
  int total_cells = 0;
  bool vacuous_threshold = false;  // thresh ran with the degenerate T == d schedule
};

inline constexpr std::string_view kSweepCsvHeader =
    "estimator,kind,d,r,T,N,trials,mean_sin_theta_op,std_sin_theta_op,mean_param_err,std_param_err,seed";
inline constexpr std::string_view kRawCsvHeader =
    "estimator,kind,d,r,T,N,trial,sin_theta_op,param_err,seed";
inline constexpr std::string_view kValidationCsvHeader =
    "check,d,T,r,samples,deviation,tolerance,pass";

/// Fixed rendering with 17 significant digits; round-trips doubles exactly.
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << kSweepCsvHeader << '\n';
  for (const SweepRow& row : result.rows) {
    out << row.estimator << ',' << row.kind << ',' << row.d << ',' << row.r << ',' << row.T << ','
        << row.N << ',' << row.trials << ',' << format_double(row.mean_sin_theta_op) << ','
        << format_double(row.std_sin_theta_op) << ',' << format_double(row.mean_param_err) << ','
        << format_double(row.std_param_err) << ',' << row.seed << '\n';
  }
}

inline void write_raw_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << kRawCsvHeader << '\n';
  for (const RawRow& row : result.raw) {
    out << row.estimator << ',' << row.kind << ',' << row.d << ',' << row.r << ',' << row.T << ','
        << row.N << ',' << row.trial << ',' << format_double(row.sin_theta_op) << ','
        << format_double(row.param_err) << ',' << row.seed << '\n';
  }
}

/// Path of the per-trial file emitted next to a summary CSV:
/// results.csv -> results.raw.csv, otherwise append ".raw.csv".
inline std::string raw_csv_path(const std::string& out) {
  constexpr std::string_view ext = ".csv";
  if (out.size() > ext.size() && out.ends_with(ext))
    return out.substr(0, out.size() - ext.size()) + ".raw.csv";
  return out + ".raw.csv";
}

namespace detail {

struct TrialOutcome {
  bool ok = false;
  double sin_theta = std::numeric_limits<double>::quiet_NaN();
  double param_err = std::numeric_limits<double>::quiet_NaN();
};

// Everything that identifies the data enters the hash, so a cell's dataset
// depends only on its own configuration and trial index, never on which
// other cells or estimators a sweep happens to contain.
inline std::uint64_t dataset_seed(std::uint64_t root, DatasetKind kind, const ModelConfig& c,
                                  double sigma_x, int trial) {
  return derive_seed(root, {static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(c.d),
                            static_cast<std::uint64_t>(c.r), static_cast<std::uint64_t>(c.T),
                            static_cast<std::uint64_t>(c.N), bits_of(c.sigma_w),
                            static_cast<std::uint64_t>(c.phi_dist), bits_of(c.sigma_phi),
                            bits_of(kind == DatasetKind::time_series ? sigma_x : 0.0), tag::trial,
                            static_cast<std::uint64_t>(trial)});
}

inline void ensure_pinv_first_steps(const Dataset& data, std::vector<Eigen::VectorXd>& raw,
                                    std::vector<double>& op_norms) {
  if (!raw.empty()) return;
  const std::size_t n = data.systems.size();
  raw.resize(n);
  op_norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    FirstStep fs = first_step_detailed(data.systems[i].X, data.systems[i].y);
    raw[i] = std::move(fs.beta);
    op_norms[i] = fs.pinv_op_norm;
  }
}

inline TrialOutcome refined_outcome(const Dataset& data, const Eigen::MatrixXd& frame,
                                    double sin_value) {
  std::vector<Eigen::VectorXd> params;
  params.reserve(data.systems.size());
  for (const LinearSystem& sys : data.systems) params.push_back(refine(sys.X, sys.y, frame).parameters);
  return {true, sin_value, param_errors(params, data.truth->parameters).mean};
}

inline TrialOutcome evaluate_estimator(Estimator est, const Dataset& data, int r, double c0,
                                       std::vector<Eigen::VectorXd>& pinv_raw,
                                       std::vector<double>& op_norms, bool& saw_vacuous) {
  const GroundTruth& truth = *data.truth;
  try {
    switch (est) {
      case Estimator::thresh: {
        ensure_pinv_first_steps(data, pinv_raw, op_norms);
        const int d = static_cast<int>(data.systems.front().X.cols());
        const int T = static_cast<int>(data.systems.front().X.rows());
        const Threshold th = default_threshold(d, T, c0);
        if (th.vacuous) saw_vacuous = true;
        FirstStepEstimates fse =
            process_first_step(pinv_raw, ProcessMode::truncate, th.s, op_norms);
        SubspaceEstimate sub = recover_subspace(fse.processed, r);
        return refined_outcome(data, sub.frame, sin_theta_op(sub.frame, truth.frame));
      }
      case Estimator::norm: {
        ensure_pinv_first_steps(data, pinv_raw, op_norms);
        FirstStepEstimates fse = process_first_step(pinv_raw, ProcessMode::normalize);
        SubspaceEstimate sub = recover_subspace(fse.processed, r);
        return refined_outcome(data, sub.frame, sin_theta_op(sub.frame, truth.frame));
      }
      case Estimator::mom: {
        std::vector<Eigen::VectorXd> raw;
        raw.reserve(data.systems.size());
        for (const LinearSystem& sys : data.systems) raw.push_back(mom_first_step(sys.X, sys.y));
        SubspaceEstimate sub = recover_subspace(raw, r);
        return refined_outcome(data, sub.frame, sin_theta_op(sub.frame, truth.frame));
      }
      case Estimator::oracle:
        // Subspace error is identically zero by definition.
        return refined_outcome(data, truth.frame, 0.0);
      case Estimator::naive: {
        ensure_pinv_first_steps(data, pinv_raw, op_norms);
        SubspaceEstimate sub = recover_subspace(pinv_raw, r);
        return {true, sin_theta_op(sub.frame, truth.frame),
                param_errors(pinv_raw, truth.parameters).mean};
      }
    }
  } catch (const EstimationError&) {
    return {};  // recorded per cell; the sweep keeps going
  }
  return {};
}

inline std::string row_kind(Estimator est, DatasetKind kind) {
  if (est == Estimator::oracle) return "oracle";
  if (est == Estimator::naive) return "naive-raw";
  return to_string(kind);
}

inline SweepResult run_sweep_impl(const SweepSpec& spec, DatasetKind kind) {
  spec.validate(kind == DatasetKind::time_series);

  std::vector<Estimator> ests;
  for (Estimator e : kEstimatorOrder)
    for (Estimator requested : spec.estimators)
      if (e == requested && std::find(ests.begin(), ests.end(), e) == ests.end())
        ests.push_back(e);

  const int nv = static_cast<int>(spec.sweep_values.size());
  const int nt = spec.trials;
  const int ne = static_cast<int>(ests.size());
  std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(nv) * nt * ne);
  std::vector<ModelConfig> cell_cfgs(nv);
  for (int v = 0; v < nv; ++v) {
    ModelConfig cfg = spec.base;
    (spec.sweep_variable == SweepSpec::Variable::N ? cfg.N : cfg.T) = spec.sweep_values[v];
    cfg.validate();
    cell_cfgs[v] = cfg;
  }

  const long tasks = static_cast<long>(nv) * nt;
  std::atomic<long> next{0};
  std::atomic<bool> vacuous{false};
  int n_threads = spec.threads > 0 ? spec.threads
                                   : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  n_threads = static_cast<int>(std::min<long>(n_threads, tasks));
  std::vector<std::exception_ptr> worker_errors(n_threads);

  auto worker = [&](int widx) {
    try {
      for (long task = next.fetch_add(1); task < tasks; task = next.fetch_add(1)) {
        const int v = static_cast<int>(task / nt);
        const int t = static_cast<int>(task % nt);
        ModelConfig cfg = cell_cfgs[v];
        cfg.seed = dataset_seed(spec.base.seed, kind, cfg, spec.sigma_x, t);
        Dataset data;
        if (kind == DatasetKind::time_series) {
          TimeSeriesConfig ts;
          static_cast<ModelConfig&>(ts) = cfg;
          ts.sigma_x = spec.sigma_x;
          data = generate_timeseries_dataset(ts);
        } else {
          data = generate_iid_dataset(cfg);
        }
        std::vector<Eigen::VectorXd> pinv_raw;
        std::vector<double> op_norms;
        bool saw_vacuous = false;
        for (int e = 0; e < ne; ++e) {
          outcomes[(static_cast<std::size_t>(v) * nt + t) * ne + e] =
              evaluate_estimator(ests[e], data, cfg.r, spec.threshold_c0, pinv_raw, op_norms,
                                 saw_vacuous);
        }
        if (saw_vacuous) vacuous = true;
      }
    } catch (...) {
      worker_errors[widx] = std::current_exception();
    }
  };

  if (n_threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& err : worker_errors)
    if (err) std::rethrow_exception(err);

  SweepResult result;
  result.vacuous_threshold = vacuous.load();
  for (int e = 0; e < ne; ++e) {
    for (int v = 0; v < nv; ++v) {
      const ModelConfig& cfg = cell_cfgs[v];
      SweepRow row;
      row.estimator = to_string(ests[e]);
      row.kind = row_kind(ests[e], kind);
      row.d = cfg.d;
      row.r = cfg.r;
      row.T = cfg.T;
      row.N = cfg.N;
      row.seed = spec.base.seed;
      double sum_s = 0, sum_s2 = 0, sum_p = 0, sum_p2 = 0;
      int ok = 0;
      for (int t = 0; t < nt; ++t) {
        const TrialOutcome& o = outcomes[(static_cast<std::size_t>(v) * nt + t) * ne + e];
        if (!o.ok) continue;
        ++ok;
        sum_s += o.sin_theta;
        sum_s2 += o.sin_theta * o.sin_theta;
        sum_p += o.param_err;
        sum_p2 += o.param_err * o.param_err;
        RawRow raw;
        raw.estimator = row.estimator;
        raw.kind = row.kind;
        raw.d = cfg.d;
        raw.r = cfg.r;
        raw.T = cfg.T;
        raw.N = cfg.N;
        raw.trial = t;
        raw.sin_theta_op = o.sin_theta;
        raw.param_err = o.param_err;
        raw.seed = spec.base.seed;
        result.raw.push_back(std::move(raw));
      }
      row.trials = ok;
      ++result.total_cells;
      if (ok == 0) {
        ++result.failed_cells;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.mean_sin_theta_op = row.std_sin_theta_op = nan;
        row.mean_param_err = row.std_param_err = nan;
      } else {
        row.mean_sin_theta_op = sum_s / ok;
        row.std_sin_theta_op = std::sqrt(std::max(sum_s2 / ok - row.mean_sin_theta_op * row.mean_sin_theta_op, 0.0));
        row.mean_param_err = sum_p / ok;
        row.std_param_err = std::sqrt(std::max(sum_p2 / ok - row.mean_param_err * row.mean_param_err, 0.0));
      }
      result.rows.push_back(std::move(row));
    }
  }

  if (!spec.output_path.empty()) {
    write_sweep_csv(result, spec.output_path);
    if (spec.emit_raw) write_raw_csv(result, raw_csv_path(spec.output_path));
  }
  return result;
}

}  // namespace detail

/// Monte-Carlo sweep over N or T on i.i.d. regression data: every trial of
/// every cell draws a fresh subspace and dataset from its own substream,
/// runs the requested estimators on the same data, and aggregates the
/// subspace and parameter errors (mean and population standard deviation
/// across trials). Deterministic for a fixed seed regardless of threading.
inline SweepResult run_sweep(const SweepSpec& spec) {
  return detail::run_sweep_impl(spec, DatasetKind::iid_regression);
}

/// Same protocol over the low-rank linear-dynamical-systems generator, with
/// errors measured against the shared row-space frame. Only the norm and mom
/// estimators are meaningful here.
inline SweepResult run_timeseries_sweep(const SweepSpec& spec) {
  return detail::run_sweep_impl(spec, DatasetKind::time_series);
}

inline constexpr std::array<std::string_view, 4> kKnownChecks = {
    "mean_projection", "sandwich", "threshold_probability", "covariance"};

struct ValidationSpec {
  std::vector<std::string> checks;  // empty: run all known checks
  ModelConfig config;               // d, T, r and noise/coefficient settings; N is unused
  double threshold_c0 = 0.5;
  std::int64_t samples = 100000;
  std::uint64_t seed = 0;
  std::string output_path;  // empty: no CSV
};

inline void write_validation_csv(const std::vector<MomentCheckReport>& reports,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << kValidationCsvHeader << '\n';
  for (const MomentCheckReport& rep : reports) {
    out << rep.check << ',' << rep.d << ',' << rep.T << ',' << rep.r << ',' << rep.samples << ','
        << format_double(rep.deviation) << ',' << format_double(rep.tolerance) << ','
        << (rep.pass ? 1 : 0) << '\n';
    for (const SubCheck& sub : rep.sub) {
      out << rep.check << '.' << sub.name << ',' << rep.d << ',' << rep.T << ',' << rep.r << ','
          << rep.samples << ',' << format_double(sub.deviation) << ','
          << format_double(sub.tolerance) << ',' << (sub.pass ? 1 : 0) << '\n';
    }
  }
}

/// Runs the requested Monte-Carlo moment checks at the spec dimensions and
/// writes one CSV row per check (plus one per sub-check). Unknown check
/// names are a usage error.
inline std::vector<MomentCheckReport> run_validation(const ValidationSpec& spec) {
  std::vector<std::string> checks = spec.checks;
  if (checks.empty()) checks.assign(kKnownChecks.begin(), kKnownChecks.end());
  for (const std::string& c : checks)
    if (std::find(kKnownChecks.begin(), kKnownChecks.end(), c) == kKnownChecks.end())
      throw std::invalid_argument("unknown check: " + c);

  std::vector<MomentCheckReport> reports;
  reports.reserve(checks.size());
  for (const std::string& name : checks) {
    const std::uint64_t idx =
        std::find(kKnownChecks.begin(), kKnownChecks.end(), name) - kKnownChecks.begin();
    const std::uint64_t check_seed = derive_seed(spec.seed, {tag::check, idx});
    if (name == "mean_projection") {
      reports.push_back(mc_mean_projection(spec.config.d, spec.config.T, spec.samples, check_seed));
    } else if (name == "sandwich") {
      auto eng = make_engine(check_seed, {tag::frame});
      const Eigen::MatrixXd b = sample_orthonormal_frame(spec.config.d, spec.config.r, eng);
      reports.push_back(mc_projection_sandwich(spec.config.d, spec.config.T, b * b.transpose(),
                                               spec.config.r, spec.samples, check_seed));
    } else if (name == "threshold_probability") {
      const Threshold th = default_threshold(spec.config.d, spec.config.T, spec.threshold_c0);
      reports.push_back(
          mc_threshold_probability(spec.config.d, spec.config.T, th.s, spec.samples, check_seed));
    } else {  // covariance
      const Threshold th = default_threshold(spec.config.d, spec.config.T, spec.threshold_c0);
      if (th.vacuous)
        throw std::invalid_argument("covariance check needs a finite threshold; T == d is vacuous");
      reports.push_back(covariance_structure_check(spec.config, th.s, spec.samples, check_seed));
    }
  }

  if (!spec.output_path.empty()) write_validation_csv(reports, spec.output_path);
  return reports;
}

}  // namespace ssr
