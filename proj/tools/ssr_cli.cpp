// Experiment driver: sweeps over N or T with the three-step estimator and
// its baselines, time-series sweeps, Monte-Carlo moment checks, and one-shot
// estimator comparisons. Results are written as CSV.
//
// Exit codes: 0 success, 1 estimation failure in every cell (or a failed
// validation check), 2 usage error.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssr/ssr.hpp"

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// key=value lines become --key=value tokens; blank lines and #/; comments
// are skipped.
std::vector<std::string> load_config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line has an empty key: " + line);
    tokens.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return tokens;
}

// Extracts --config <file> from the raw arguments and splices the file's
// entries in right after the subcommand name. Every option uses take-last
// policy, so explicitly passed flags override the file.
std::vector<std::string> preprocess_args(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw std::invalid_argument("--config expects a file path");
      config_path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + i);
    } else {
      ++i;
    }
  }
  if (!config_path.empty()) {
    const std::vector<std::string> tokens = load_config_tokens(config_path);
    auto sub_pos = std::find_if(args.begin(), args.end(),
                                [](const std::string& a) { return a.empty() || a[0] != '-'; });
    if (sub_pos == args.end()) throw std::invalid_argument("--config requires a subcommand");
    args.insert(sub_pos + 1, tokens.begin(), tokens.end());
  }
  return args;
}

struct CommonOpts {
  int d = 50;
  int r = 5;
  int T = 10;
  double sigma_w = 0.1;
  std::string phi_dist = "ball";
  double sigma_phi = 0.0;  // 0: use 1/sqrt(r) when the distribution is gaussian
  std::uint64_t seed = 0;
  int trials = 30;
  double threshold_c0 = 0.5;
  std::string out;
  bool emit_raw = false;
  int threads = 0;
  std::vector<std::string> estimators;
};

void add_model_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--d", o.d, "Ambient dimension d")->capture_default_str();
  cmd->add_option("--r", o.r, "Shared subspace dimension r")->capture_default_str();
  cmd->add_option("--sigma-w", o.sigma_w, "Noise standard deviation")->capture_default_str();
  cmd->add_option("--phi-dist", o.phi_dist, "Coefficient distribution: ball | gaussian")
      ->check(CLI::IsMember({"ball", "gaussian"}))
      ->capture_default_str();
  cmd->add_option("--sigma-phi", o.sigma_phi,
                  "Coordinate std for gaussian coefficients (default 1/sqrt(r))");
  cmd->add_option("--seed", o.seed, "Root RNG seed")->capture_default_str();
  cmd->add_option("--threshold-c0", o.threshold_c0, "Constant c0 in the truncation schedule")
      ->capture_default_str();
  // Handled by preprocess_args; registered here so it shows up in --help.
  cmd->add_option("--config", "Optional key=value config file; flags override it");
}

void add_sweep_options(CLI::App* cmd, CommonOpts& o, const std::string& default_out) {
  o.out = default_out;
  cmd->add_option("--trials", o.trials, "Trials per sweep cell")->capture_default_str();
  cmd->add_option("--out", o.out, "Summary CSV path")->capture_default_str();
  cmd->add_flag("--emit-raw", o.emit_raw,
                "Also write per-trial values next to the summary (<out>.raw.csv)");
  cmd->add_option("--threads", o.threads, "Worker threads (0 = hardware)")->capture_default_str();
}

ssr::ModelConfig make_config(const CommonOpts& o, int T, int N) {
  ssr::ModelConfig cfg;
  cfg.d = o.d;
  cfg.r = o.r;
  cfg.T = T;
  cfg.N = N;
  cfg.sigma_w = o.sigma_w;
  cfg.seed = o.seed;
  if (o.phi_dist == "gaussian") {
    cfg.phi_dist = ssr::PhiDist::isotropic_gaussian;
    cfg.sigma_phi = o.sigma_phi > 0.0 ? o.sigma_phi : 1.0 / std::sqrt(static_cast<double>(o.r));
  } else {
    cfg.phi_dist = ssr::PhiDist::unit_ball_uniform;
  }
  return cfg;
}

std::vector<ssr::Estimator> parse_estimators(const std::vector<std::string>& names) {
  std::vector<ssr::Estimator> out;
  for (const std::string& name : names) {
    auto e = ssr::estimator_from_string(name);
    if (!e) throw std::invalid_argument("unknown estimator: " + name);
    out.push_back(*e);
  }
  return out;
}

int finish_sweep(const ssr::SweepResult& result, const std::string& out, bool emit_raw) {
  if (result.vacuous_threshold)
    std::fprintf(stderr,
                 "[ssr] note: truncation schedule is vacuous at T == d; thresh kept every system "
                 "(prefer the norm variant there)\n");
  if (result.failed_cells > 0)
    std::fprintf(stderr, "[ssr] %d of %d cells had no successful trial\n", result.failed_cells,
                 result.total_cells);
  std::printf("wrote %s (%zu rows)\n", out.c_str(), result.rows.size());
  if (emit_raw) std::printf("wrote %s (%zu rows)\n", ssr::raw_csv_path(out).c_str(), result.raw.size());
  return result.failed_cells == result.total_cells ? 1 : 0;
}

void print_table(const std::vector<ssr::SweepRow>& rows) {
  std::printf("%-18s %6s %6s %6s %8s %12s %12s %12s %12s %7s\n", "estimator", "d", "r", "T", "N",
              "mean_sin", "std_sin", "mean_param", "std_param", "trials");
  for (const auto& row : rows)
    std::printf("%-18s %6d %6d %6d %8d %12.5g %12.5g %12.5g %12.5g %7d\n", row.estimator.c_str(),
                row.d, row.r, row.T, row.N, row.mean_sin_theta_op, row.std_sin_theta_op,
                row.mean_param_err, row.std_param_err, row.trials);
}

int run(int argc, char** argv) {
  CLI::App app{"ssr: joint estimation of shared parameter subspaces across linear systems"};
  app.require_subcommand(1);

  CommonOpts sweep_n_opts, sweep_t_opts, ts_opts, cmp_opts, val_opts;

  // sweep-n
  auto* sweep_n = app.add_subcommand("sweep-n", "Sweep the number of systems N (i.i.d. data)");
  std::vector<int> n_values = {250, 500, 1000, 2000, 4000};
  sweep_n_opts.estimators = {"thresh", "norm"};
  add_model_options(sweep_n, sweep_n_opts);
  sweep_n->add_option("--T", sweep_n_opts.T, "Observations per system")->capture_default_str();
  sweep_n->add_option("--N", n_values, "Sweep values for N (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  sweep_n->add_option("--estimators", sweep_n_opts.estimators,
                      "Estimators: thresh,norm,mom,oracle,naive")
      ->delimiter(',')
      ->capture_default_str();
  add_sweep_options(sweep_n, sweep_n_opts, "sweep_n.csv");

  // sweep-t
  auto* sweep_t = app.add_subcommand("sweep-t", "Sweep the observations per system T (i.i.d. data)");
  std::vector<int> t_values = {10, 25, 50, 80};
  int sweep_t_N = 1000;
  sweep_t_opts.estimators = {"thresh", "norm", "mom"};
  add_model_options(sweep_t, sweep_t_opts);
  sweep_t->add_option("--N", sweep_t_N, "Number of systems")->capture_default_str();
  sweep_t->add_option("--T", t_values, "Sweep values for T (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  sweep_t->add_option("--estimators", sweep_t_opts.estimators,
                      "Estimators: thresh,norm,mom,oracle,naive")
      ->delimiter(',')
      ->capture_default_str();
  add_sweep_options(sweep_t, sweep_t_opts, "sweep_t.csv");

  // timeseries
  auto* ts = app.add_subcommand("timeseries", "Sweep N on low-rank linear-dynamics data");
  std::vector<int> ts_values = {250, 500, 1000, 2000, 4000};
  double sigma_x = 1.0;
  ts_opts.d = 20;
  ts_opts.T = 8;
  ts_opts.sigma_w = 0.001;  // low process noise keeps the regressors strongly non-isotropic
  ts_opts.estimators = {"norm", "mom"};
  add_model_options(ts, ts_opts);
  ts->add_option("--T", ts_opts.T, "Observed transitions per system")->capture_default_str();
  ts->add_option("--N", ts_values, "Sweep values for N (comma separated)")
      ->delimiter(',')
      ->capture_default_str();
  ts->add_option("--sigma-x", sigma_x, "Initial-state standard deviation")->capture_default_str();
  ts->add_option("--estimators", ts_opts.estimators, "Estimators: norm,mom")
      ->delimiter(',')
      ->capture_default_str();
  add_sweep_options(ts, ts_opts, "timeseries.csv");

  // validate
  auto* val = app.add_subcommand("validate", "Monte-Carlo checks of the moment identities");
  std::vector<std::string> checks;
  std::int64_t samples = 100000;
  val_opts.d = 6;
  val_opts.r = 2;
  val_opts.T = 3;
  val_opts.phi_dist = "gaussian";
  val_opts.out = "validation.csv";
  add_model_options(val, val_opts);
  val->add_option("--T", val_opts.T, "Observations per system")->capture_default_str();
  val->add_option("--checks", checks,
                  "Checks: mean_projection,sandwich,threshold_probability,covariance (default all)")
      ->delimiter(',');
  val->add_option("--samples", samples, "Monte-Carlo sample count")->capture_default_str();
  val->add_option("--out", val_opts.out, "Report CSV path")->capture_default_str();

  // compare
  auto* cmp = app.add_subcommand("compare", "All estimators at one configuration");
  int cmp_N = 1000;
  std::vector<double> c0_grid;
  cmp_opts.estimators = {"thresh", "norm", "mom", "oracle", "naive"};
  add_model_options(cmp, cmp_opts);
  cmp->add_option("--T", cmp_opts.T, "Observations per system")->capture_default_str();
  cmp->add_option("--N", cmp_N, "Number of systems")->capture_default_str();
  cmp->add_option("--estimators", cmp_opts.estimators, "Estimators: thresh,norm,mom,oracle,naive")
      ->delimiter(',')
      ->capture_default_str();
  cmp->add_option("--c0-grid", c0_grid, "Extra thresh rows, one per c0 value (comma separated)")
      ->delimiter(',');
  add_sweep_options(cmp, cmp_opts, "");

  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    for (CLI::Option* opt : sub->get_options())
      opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  try {
    std::vector<std::string> args = preprocess_args(argc, argv);
    std::reverse(args.begin(), args.end());  // CLI11's vector parse wants reversed args
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sweep_n->parsed() || sweep_t->parsed()) {
    const bool over_n = sweep_n->parsed();
    CommonOpts& o = over_n ? sweep_n_opts : sweep_t_opts;
    ssr::SweepSpec spec;
    spec.base = make_config(o, over_n ? o.T : 1, over_n ? 1 : sweep_t_N);
    spec.sweep_variable = over_n ? ssr::SweepSpec::Variable::N : ssr::SweepSpec::Variable::T;
    spec.sweep_values = over_n ? n_values : t_values;
    spec.estimators = parse_estimators(o.estimators);
    spec.trials = o.trials;
    spec.threshold_c0 = o.threshold_c0;
    spec.output_path = o.out;
    spec.emit_raw = o.emit_raw;
    spec.threads = o.threads;
    return finish_sweep(ssr::run_sweep(spec), o.out, o.emit_raw);
  }

  if (ts->parsed()) {
    CommonOpts& o = ts_opts;
    ssr::SweepSpec spec;
    spec.base = make_config(o, o.T, 1);
    spec.sigma_x = sigma_x;
    spec.sweep_variable = ssr::SweepSpec::Variable::N;
    spec.sweep_values = ts_values;
    spec.estimators = parse_estimators(o.estimators);
    spec.trials = o.trials;
    spec.threshold_c0 = o.threshold_c0;
    spec.output_path = o.out;
    spec.emit_raw = o.emit_raw;
    spec.threads = o.threads;
    return finish_sweep(ssr::run_timeseries_sweep(spec), o.out, o.emit_raw);
  }

  if (val->parsed()) {
    ssr::ValidationSpec spec;
    spec.checks = checks;
    spec.config = make_config(val_opts, val_opts.T, 1);
    spec.threshold_c0 = val_opts.threshold_c0;
    spec.samples = samples;
    spec.seed = val_opts.seed;
    spec.output_path = val_opts.out;
    const auto reports = ssr::run_validation(spec);
    bool all_pass = true;
    for (const auto& rep : reports) {
      std::printf("[%s] %s: deviation=%.6g tolerance=%.6g (d=%d T=%d r=%d samples=%lld)\n",
                  rep.pass ? "PASS" : "FAIL", rep.check.c_str(), rep.deviation, rep.tolerance,
                  rep.d, rep.T, rep.r, static_cast<long long>(rep.samples));
      for (const auto& sub : rep.sub)
        std::printf("[%s] %s.%s: value=%.6g target=%.6g deviation=%.6g tolerance=%.6g\n",
                    sub.pass ? "PASS" : "FAIL", rep.check.c_str(), sub.name.c_str(), sub.value,
                    sub.target, sub.deviation, sub.tolerance);
      all_pass = all_pass && rep.all_pass();
    }
    if (!spec.output_path.empty()) std::printf("wrote %s\n", spec.output_path.c_str());
    return all_pass ? 0 : 1;
  }

  // compare
  CommonOpts& o = cmp_opts;
  ssr::SweepSpec spec;
  spec.base = make_config(o, o.T, 1);
  spec.sweep_variable = ssr::SweepSpec::Variable::N;
  spec.sweep_values = {cmp_N};
  spec.estimators = parse_estimators(o.estimators);
  spec.trials = o.trials;
  spec.threshold_c0 = o.threshold_c0;
  spec.threads = o.threads;
  ssr::SweepResult result = ssr::run_sweep(spec);

  for (double c0 : c0_grid) {
    ssr::SweepSpec grid_spec = spec;
    grid_spec.estimators = {ssr::Estimator::thresh};
    grid_spec.threshold_c0 = c0;
    ssr::SweepResult grid = ssr::run_sweep(grid_spec);
    char label[64];
    std::snprintf(label, sizeof(label), "thresh[c0=%g]", c0);
    for (auto& row : grid.rows) {
      row.estimator = label;
      result.rows.push_back(std::move(row));
    }
    for (auto& row : grid.raw) {
      row.estimator = label;
      result.raw.push_back(std::move(row));
    }
    result.failed_cells += grid.failed_cells;
    result.total_cells += grid.total_cells;
    result.vacuous_threshold = result.vacuous_threshold || grid.vacuous_threshold;
  }

  print_table(result.rows);
  if (!o.out.empty()) {
    ssr::write_sweep_csv(result, o.out);
    if (o.emit_raw) ssr::write_raw_csv(result, ssr::raw_csv_path(o.out));
    std::printf("wrote %s\n", o.out.c_str());
  }
  if (result.vacuous_threshold)
    std::fprintf(stderr, "[ssr] note: truncation schedule is vacuous at T == d\n");
  return result.failed_cells == result.total_cells ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ssr::EstimationError& e) {
    std::fprintf(stderr, "estimation error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
