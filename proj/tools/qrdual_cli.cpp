// Command-line surface for the quantile-regression dual toolkit: fitting,
// LOO-calibrated corrections, dual-threshold prediction, conformal baselines,
// simulation protocols, and the asymptotic saddle solver.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "qrdual/asymptotics.hpp"
#include "qrdual/calibrate.hpp"
#include "qrdual/conformal.hpp"
#include "qrdual/dataset.hpp"
#include "qrdual/errors.hpp"
#include "qrdual/experiments.hpp"
#include "qrdual/loo.hpp"
#include "qrdual/metrics.hpp"
#include "qrdual/parallel.hpp"
#include "qrdual/quantile.hpp"
#include "qrdual/rng.hpp"
#include "qrdual/solver.hpp"

namespace {

using json = nlohmann::json;
using namespace qrdual;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitSolver = 3;
constexpr int kExitData = 4;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw CLI::ValidationError("expected a comma-separated list: " + text);
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

void emit(const json& payload, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << payload.dump(2) << "\n";
    return;
  }
  std::ofstream file(out_path);
  if (!file) throw DataError("cannot open output path '" + out_path + "'");
  file << payload.dump(2) << "\n";
}

json kkt_json(const KktCertificate& kkt) {
  return json{{"primal_residual", kkt.primal_residual},
              {"dual_residual", kkt.dual_residual},
              {"stationarity_norm", kkt.stationarity_norm},
              {"duality_gap_per_sample", kkt.duality_gap_per_sample},
              {"box_violation", kkt.box_violation},
              {"response_scale", kkt.response_scale},
              {"design_scale", kkt.design_scale},
              {"rank_deficient", kkt.rank_deficient},
              {"converged", kkt.converged}};
}

json fit_json(const FitResult& fr, bool include_vectors) {
  json j{{"intercept_or_offset", fr.intercept_or_offset},
         {"objective", fr.objective},
         {"iterations", fr.iterations},
         {"tau", fr.tau},
         {"lambda", fr.lambda},
         {"kkt", kkt_json(fr.kkt)}};
  j["beta"] = std::vector<double>(fr.beta.data(), fr.beta.data() + fr.beta.size());
  const LooSummary loo = loo_coverage_dual(fr);
  j["loo_coverage"] = loo.coverage;
  j["loo_tie_count"] = loo.tie_count;
  if (include_vectors) {
    j["duals"] = std::vector<double>(fr.duals.data(), fr.duals.data() + fr.duals.size());
    j["residuals"] =
        std::vector<double>(fr.residuals.data(), fr.residuals.data() + fr.residuals.size());
  }
  return j;
}

json calibration_json(const CalibrationResult& cal) {
  json j;
  switch (cal.method) {
    case CalibrationMethod::kLevelAdjust: j["method"] = "level"; break;
    case CalibrationMethod::kLevelRidge: j["method"] = "level-ridge"; break;
    case CalibrationMethod::kAdditiveAdjust: j["method"] = "additive"; break;
    case CalibrationMethod::kAdditiveRidge: j["method"] = "additive-ridge"; break;
    case CalibrationMethod::kBaiClosedForm: j["method"] = "bai"; break;
  }
  if (cal.tau_adj) j["tau_adj"] = *cal.tau_adj;
  if (cal.c) j["c"] = *cal.c;
  if (cal.lambda) j["lambda"] = *cal.lambda;
  j["loo_coverage"] = cal.loo_coverage;
  if (cal.loo_multiaccuracy) j["loo_multiaccuracy"] = *cal.loo_multiaccuracy;
  j["saturated_low"] = cal.saturated_low;
  j["saturated_high"] = cal.saturated_high;
  j["lambda_tau_empty"] = cal.lambda_tau_empty;
  json trace = json::array();
  for (const auto& probe : cal.search_trace) {
    trace.push_back({{"parameter", probe.parameter}, {"loo_coverage", probe.loo_coverage}});
  }
  j["search_trace"] = trace;
  if (!cal.lambda_trace.empty()) {
    json lt = json::array();
    for (const auto& p : cal.lambda_trace) {
      lt.push_back({{"lambda", p.lambda},
                    {"parameter", p.parameter},
                    {"loo_coverage", p.loo_coverage},
                    {"multiaccuracy", p.multiaccuracy},
                    {"in_lambda_tau", p.in_lambda_tau}});
    }
    j["lambda_trace"] = lt;
  }
  j["fit"] = fit_json(cal.final_fit, false);
  return j;
}

struct CsvInput {
  std::string path;
  std::string response;
  bool normalize_flag = false;

  Dataset load() const {
    Dataset data = load_csv(path, response);
    if (normalize_flag) data = normalize(data);
    return data;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--csv", path, "input CSV (header row)")->required();
    cmd->add_option("--response", response, "response column name")->required();
    cmd->add_flag("--normalize", normalize_flag,
                  "center/scale features and response to mean 0, variance 1");
  }
};

struct SolverFlags {
  double tolerance = 1e-9;
  int max_iterations = 50000;
  double rho = 1.0;

  SolverConfig config() const {
    SolverConfig cfg;
    cfg.tolerance = tolerance;
    cfg.max_iterations = max_iterations;
    cfg.admm_rho = rho;
    return cfg;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--tol", tolerance, "solver tolerance (default 1e-9)");
    cmd->add_option("--max-iter", max_iterations, "solver iteration cap (default 50000)");
    cmd->add_option("--rho", rho, "initial ADMM penalty (default 1.0)");
  }
};

Vector parse_point(const std::string& text, Eigen::Index d) {
  const std::vector<double> values = parse_double_list(text);
  if (static_cast<Eigen::Index>(values.size()) != d) {
    throw DataError("test point has " + std::to_string(values.size()) + " entries, expected " +
                    std::to_string(d));
  }
  Vector x(d);
  for (Eigen::Index j = 0; j < d; ++j) x(j) = values[j];
  return x;
}

json prediction_json(const ThresholdPrediction& p) {
  json j{{"plus_inf", p.plus_inf}, {"minus_inf", p.minus_inf}};
  if (!p.plus_inf && !p.minus_inf) j["value"] = p.value;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"penalized quantile regression with dual-based LOO calibration"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file overlaying the flags");
  app.get_config_formatter_base()->comment('#');

  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: logical cores)");

  std::string out_path;
  app.add_option("--out", out_path, "output file (.json or .csv by extension)");

  // --- fit ---------------------------------------------------------------
  auto* cmd_fit = app.add_subcommand("fit", "fit one penalized quantile regression");
  CsvInput fit_in;
  SolverFlags fit_solver;
  double fit_tau = 0.5, fit_lambda = 0.0;
  std::optional<double> fit_offset;
  bool fit_dump = false;
  fit_in.attach(cmd_fit);
  fit_solver.attach(cmd_fit);
  cmd_fit->add_option("--tau", fit_tau, "quantile level in (0,1)")->required();
  cmd_fit->add_option("--lambda", fit_lambda, "ridge penalty (default 0)");
  cmd_fit->add_option("--offset", fit_offset,
                      "fixed offset c (intercept-less fit); omit for a free intercept");
  cmd_fit->add_flag("--dump-vectors", fit_dump, "include duals and residuals in the output");

  // --- calibrate-level -----------------------------------------------------
  auto* cmd_level = app.add_subcommand("calibrate-level", "tune the nominal level by LOO duals");
  CsvInput level_in;
  SolverFlags level_solver;
  double level_tau = 0.9;
  std::optional<double> level_lambda;
  std::optional<std::string> level_grid;
  double level_grid_max = 0.1, level_grid_step = 0.005;
  bool level_ridge = false;
  level_in.attach(cmd_level);
  level_solver.attach(cmd_level);
  cmd_level->add_option("--tau", level_tau, "target coverage level")->required();
  cmd_level->add_option("--lambda", level_lambda, "fixed ridge penalty (single-level search)");
  cmd_level->add_flag("--ridge", level_ridge, "two-step (lambda, tau-adj) over the default grid");
  cmd_level->add_option("--lambda-grid", level_grid, "explicit comma-separated lambda grid");
  cmd_level->add_option("--grid-max", level_grid_max, "scaled grid cap (default 0.1)");
  cmd_level->add_option("--grid-step", level_grid_step, "scaled grid step (default 0.005)");

  // --- calibrate-additive --------------------------------------------------
  auto* cmd_add = app.add_subcommand("calibrate-additive", "tune an additive offset by LOO duals");
  CsvInput add_in;
  SolverFlags add_solver;
  double add_tau = 0.9;
  std::optional<double> add_lambda;
  std::optional<std::string> add_grid;
  double add_grid_max = 0.1, add_grid_step = 0.005;
  double add_c_lo = -10.0, add_c_hi = 10.0;
  bool add_ridge = false;
  add_in.attach(cmd_add);
  add_solver.attach(cmd_add);
  cmd_add->add_option("--tau", add_tau, "target coverage level")->required();
  cmd_add->add_option("--lambda", add_lambda, "fixed ridge penalty (single-offset search)");
  cmd_add->add_flag("--ridge", add_ridge, "two-step (lambda, c) over the default grid");
  cmd_add->add_option("--lambda-grid", add_grid, "explicit comma-separated lambda grid");
  cmd_add->add_option("--grid-max", add_grid_max, "scaled grid cap (default 0.1)");
  cmd_add->add_option("--grid-step", add_grid_step, "scaled grid step (default 0.005)");
  cmd_add->add_option("--c-lo", add_c_lo, "offset search lower end (default -10)");
  cmd_add->add_option("--c-hi", add_c_hi, "offset search upper end (default 10)");

  // --- dual-threshold ------------------------------------------------------
  auto* cmd_dt = app.add_subcommand("dual-threshold",
                                    "dual-thresholded quantile prediction at a test point");
  CsvInput dt_in;
  SolverFlags dt_solver;
  double dt_tau = 0.9, dt_lambda = 0.0;
  std::optional<double> dt_t;
  std::string dt_x;
  dt_in.attach(cmd_dt);
  dt_solver.attach(cmd_dt);
  cmd_dt->add_option("--tau", dt_tau, "quantile level")->required();
  cmd_dt->add_option("--lambda", dt_lambda, "ridge penalty (default 0)");
  cmd_dt->add_option("--x", dt_x, "test point, comma-separated features")->required();
  cmd_dt->add_option("--t", dt_t,
                     "dual threshold; defaults to the empirical tau-quantile of the duals");

  // --- conformal -----------------------------------------------------------
  auto* cmd_conf = app.add_subcommand("conformal", "full-conformal or randomized cutoff");
  CsvInput conf_in;
  SolverFlags conf_solver;
  double conf_tau = 0.9, conf_lambda = 0.0;
  std::string conf_x;
  std::string conf_method = "full";
  std::optional<double> conf_u;
  std::optional<std::uint64_t> conf_seed;
  conf_in.attach(cmd_conf);
  conf_solver.attach(cmd_conf);
  cmd_conf->add_option("--tau", conf_tau, "quantile level")->required();
  cmd_conf->add_option("--lambda", conf_lambda, "ridge penalty (default 0)");
  cmd_conf->add_option("--x", conf_x, "test point, comma-separated features")->required();
  cmd_conf->add_option("--method", conf_method, "full | rand (default full)");
  cmd_conf->add_option("--u", conf_u, "randomized cutoff in (-(1-tau), tau)");
  cmd_conf->add_option("--seed", conf_seed, "seed used to draw u when --u is absent");

  // --- cqr -------------------------------------------------------------
  auto* cmd_cqr = app.add_subcommand("cqr", "split conformalized quantile regression intervals");
  CsvInput cqr_in;
  SolverFlags cqr_solver;
  double cqr_alpha = 0.1, cqr_split = 0.75;
  std::string cqr_test;
  std::string cqr_test_response;
  cqr_in.attach(cmd_cqr);
  cqr_solver.attach(cmd_cqr);
  cmd_cqr->add_option("--alpha", cqr_alpha, "miscoverage level (default 0.1)");
  cmd_cqr->add_option("--split", cqr_split, "proper-training fraction (default 0.75)");
  cmd_cqr->add_option("--test-csv", cqr_test, "feature rows to predict")->required();
  cmd_cqr->add_option("--test-response", cqr_test_response,
                      "response column in the test CSV; enables evaluation");

  // --- simulate --------------------------------------------------------
  auto* cmd_sim = app.add_subcommand("simulate", "run a figure protocol");
  std::string sim_figure = "fig1";
  FigureOverrides overrides;
  std::optional<std::string> sim_dims, sim_ns;
  std::optional<int> sim_n, sim_trials, sim_ntest, sim_train_size, sim_eval_cap, sim_cutoff,
      sim_upoints;
  std::optional<double> sim_tau, sim_alpha, sim_sigma, sim_gridmax, sim_gridstep, sim_tol;
  std::optional<std::uint64_t> sim_seed;
  std::optional<double> sim_clo, sim_chi;
  std::string sim_csv, sim_response, sim_summary;
  cmd_sim->add_option("--figure", sim_figure, "fig1..fig6 or fig7-style")->required();
  cmd_sim->add_option("--n", sim_n, "training size");
  cmd_sim->add_option("--d", sim_dims, "dimension list, e.g. 1,15,30,90");
  cmd_sim->add_option("--ns", sim_ns, "sample-size list for the fixed-aspect panel");
  cmd_sim->add_option("--trials", sim_trials, "number of trials");
  cmd_sim->add_option("--n-test", sim_ntest, "test points per trial");
  cmd_sim->add_option("--tau", sim_tau, "one-sided target level");
  cmd_sim->add_option("--alpha", sim_alpha, "two-sided miscoverage level");
  cmd_sim->add_option("--sigma", sim_sigma, "noise standard deviation");
  cmd_sim->add_option("--seed", sim_seed, "master seed");
  cmd_sim->add_option("--grid-max", sim_gridmax, "scaled lambda-grid cap");
  cmd_sim->add_option("--grid-step", sim_gridstep, "scaled lambda-grid step");
  cmd_sim->add_option("--c-lo", sim_clo, "additive range lower end");
  cmd_sim->add_option("--c-hi", sim_chi, "additive range upper end");
  cmd_sim->add_option("--tol", sim_tol, "solver tolerance for the run");
  cmd_sim->add_option("--csv", sim_csv, "real-data CSV (fig7-style)");
  cmd_sim->add_option("--response", sim_response, "response column (fig7-style)");
  cmd_sim->add_option("--train-size", sim_train_size, "training rows (fig7-style)");
  cmd_sim->add_option("--eval-cap", sim_eval_cap, "test rows scored by per-point methods");
  cmd_sim->add_option("--cutoff-reps", sim_cutoff, "repetitions for the fig5 cutoff curve");
  cmd_sim->add_option("--u-points", sim_upoints, "fig5 u-grid size");
  cmd_sim->add_option("--summary", sim_summary, "also write the JSON summary here");

  // --- asymptotics -------------------------------------------------------
  auto* cmd_asy = app.add_subcommand("asymptotics", "solve the deterministic saddle program");
  double asy_gamma = 0.2, asy_tau = 0.9, asy_sigma = 1.0, asy_lambda = 0.0, asy_m2 = 1.0;
  std::string asy_quantiles = "0.05,0.1,0.25,0.5,0.75,0.9,0.95";
  cmd_asy->add_option("--gamma", asy_gamma, "aspect ratio in (0, 2/pi)")->required();
  cmd_asy->add_option("--tau", asy_tau, "quantile level")->required();
  cmd_asy->add_option("--sigma", asy_sigma, "noise standard deviation (default 1)");
  cmd_asy->add_option("--lambda", asy_lambda, "scaled ridge level (default 0)");
  cmd_asy->add_option("--beta-m2", asy_m2, "second moment of sqrt(d)*beta (default 1)");
  cmd_asy->add_option("--quantiles", asy_quantiles, "P_eta quantile levels to report");

  // --- evaluate ----------------------------------------------------------
  auto* cmd_eval = app.add_subcommand("evaluate", "score intervals against test data");
  std::string eval_pred, eval_csv, eval_response;
  double eval_alpha = 0.1;
  cmd_eval->add_option("--pred", eval_pred, "CSV with 'lower,upper' columns")->required();
  cmd_eval->add_option("--csv", eval_csv, "test CSV")->required();
  cmd_eval->add_option("--response", eval_response, "response column")->required();
  cmd_eval->add_option("--alpha", eval_alpha, "miscoverage level (default 0.1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  set_max_threads(threads);

  if (cmd_fit->parsed()) {
    const Dataset data = fit_in.load();
    ProblemSpec spec;
    spec.tau = fit_tau;
    spec.lambda = fit_lambda;
    if (fit_offset) {
      spec.intercept_mode = InterceptMode::kFixedOffset;
      spec.offset = *fit_offset;
    }
    const FitResult fr = fit(data, spec, fit_solver.config());
    emit(fit_json(fr, fit_dump), out_path);
    return kExitOk;
  }

  if (cmd_level->parsed()) {
    const Dataset data = level_in.load();
    CalibrationResult cal;
    if (level_ridge || level_grid) {
      const std::vector<double> grid =
          level_grid ? parse_double_list(*level_grid)
                     : default_lambda_grid(data.n_samples(), level_grid_max, level_grid_step);
      cal = calibrate_level_ridge(data, level_tau, grid, level_solver.config());
    } else {
      cal = calibrate_level(data, level_tau, level_lambda.value_or(0.0), level_solver.config());
    }
    emit(calibration_json(cal), out_path);
    return kExitOk;
  }

  if (cmd_add->parsed()) {
    const Dataset data = add_in.load();
    const std::pair<double, double> c_range{add_c_lo, add_c_hi};
    CalibrationResult cal;
    if (add_ridge || add_grid) {
      const std::vector<double> grid =
          add_grid ? parse_double_list(*add_grid)
                   : default_lambda_grid(data.n_samples(), add_grid_max, add_grid_step);
      cal = calibrate_additive_ridge(data, add_tau, grid, c_range, add_solver.config());
    } else {
      cal = calibrate_additive(data, add_tau, add_lambda.value_or(0.0), c_range,
                               add_solver.config());
    }
    emit(calibration_json(cal), out_path);
    return kExitOk;
  }

  if (cmd_dt->parsed()) {
    const Dataset data = dt_in.load();
    ProblemSpec spec;
    spec.tau = dt_tau;
    spec.lambda = dt_lambda;
    const Vector x = parse_point(dt_x, data.n_features());
    ConformalScorer scorer(data, spec, dt_solver.config());
    const double t_used = dt_t.value_or(scorer.threshold_hat());
    const ThresholdPrediction pred = scorer.predict_at_threshold(x, t_used);
    json j = prediction_json(pred);
    j["t_used"] = t_used;
    j["t_hat"] = scorer.threshold_hat();
    emit(j, out_path);
    return kExitOk;
  }

  if (cmd_conf->parsed()) {
    const Dataset data = conf_in.load();
    ProblemSpec spec;
    spec.tau = conf_tau;
    spec.lambda = conf_lambda;
    const Vector x = parse_point(conf_x, data.n_features());
    json j;
    if (conf_method == "full") {
      j = prediction_json(full_conformal_predict(data, spec, conf_solver.config(), x));
      j["method"] = "full";
    } else if (conf_method == "rand") {
      double u;
      if (conf_u) {
        u = *conf_u;
      } else {
        RandomStream rng(conf_seed.value_or(1));
        u = rng.uniform(-(1.0 - conf_tau), conf_tau);
      }
      j = prediction_json(randomized_gcc_predict(data, spec, conf_solver.config(), x, u));
      j["method"] = "rand";
      j["u"] = u;
    } else {
      throw CLI::ValidationError("--method must be full or rand");
    }
    emit(j, out_path);
    return kExitOk;
  }

  if (cmd_cqr->parsed()) {
    const Dataset data = cqr_in.load();
    std::vector<std::string> columns = data.feature_names;
    Matrix x_test = load_csv_features(cqr_test, columns);
    if (data.normalized) {
      Dataset tmp;
      tmp.features = x_test;
      tmp.response = Vector::Zero(x_test.rows());
      tmp = apply_normalization(tmp, data.feature_scaling, ColumnScaling{});
      x_test = tmp.features;
    }
    const IntervalList intervals =
        cqr_predict(data, cqr_alpha, cqr_split, cqr_solver.config(), x_test);
    json j;
    json rows = json::array();
    for (const auto& [lo, hi] : intervals) rows.push_back({{"lower", lo}, {"upper", hi}});
    j["intervals"] = rows;
    if (!cqr_test_response.empty()) {
      const Dataset test = load_csv(cqr_test, cqr_test_response);
      Vector y = test.response;
      if (data.normalized) {
        y = (y.array() - data.response_scaling.mean) / data.response_scaling.scale;
      }
      const IntervalReport report = evaluate(intervals, y, x_test, cqr_alpha);
      j["report"] = {{"coverage", report.coverage},
                     {"median_length", report.median_length},
                     {"multiaccuracy", report.multiaccuracy}};
    }
    emit(j, out_path);
    return kExitOk;
  }

  if (cmd_sim->parsed()) {
    overrides.n = sim_n;
    overrides.trials = sim_trials;
    overrides.n_test = sim_ntest;
    overrides.tau = sim_tau;
    overrides.alpha = sim_alpha;
    overrides.sigma_eps = sim_sigma;
    overrides.seed = sim_seed;
    overrides.grid_max = sim_gridmax;
    overrides.grid_step = sim_gridstep;
    overrides.solver_tolerance = sim_tol;
    overrides.train_size = sim_train_size;
    overrides.eval_cap = sim_eval_cap;
    overrides.cutoff_reps = sim_cutoff;
    overrides.u_points = sim_upoints;
    overrides.csv_path = sim_csv;
    overrides.response_column = sim_response;
    if (sim_dims) overrides.dims = parse_int_list(*sim_dims);
    if (sim_ns) overrides.sample_sizes = parse_int_list(*sim_ns);
    if (sim_clo || sim_chi) {
      overrides.c_range = std::make_pair(sim_clo.value_or(-10.0), sim_chi.value_or(10.0));
    }
    const ExperimentReport report = run_figure(parse_figure_id(sim_figure), overrides);

    json summary;
    summary["figure"] = figure_name(report.figure);
    summary["trials"] = report.config.trials;
    summary["seed"] = report.config.seed;
    summary["failed_trials"] = report.failed_trials;
    summary["fits"] = report.cert_stats.fits;
    summary["cert_max"] = {{"primal_scaled", report.cert_stats.max_primal},
                           {"stationarity_scaled", report.cert_stats.max_stationarity},
                           {"gap_per_sample", report.cert_stats.max_gap},
                           {"box_violation", report.cert_stats.max_box}};
    json aggregates = json::array();
    for (const auto& agg : report.aggregates) {
      aggregates.push_back({{"setting", agg.setting},
                            {"method", agg.method},
                            {"count", agg.count},
                            {"mean_coverage", agg.mean_coverage},
                            {"mean_miscoverage", agg.mean_miscoverage},
                            {"se", agg.se_coverage},
                            {"miscoverage_q25", agg.miscoverage_q25},
                            {"miscoverage_q50", agg.miscoverage_q50},
                            {"miscoverage_q75", agg.miscoverage_q75},
                            {"mean_length", agg.mean_length},
                            {"mean_multiaccuracy", agg.mean_multiaccuracy},
                            {"mean_tau_adj", agg.mean_tau_adj},
                            {"mean_c", agg.mean_c},
                            {"mean_lambda", agg.mean_lambda},
                            {"mean_extra", agg.mean_extra},
                            {"flag_count", agg.flag_count}});
    }
    summary["aggregates"] = aggregates;

    const bool csv_out = out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".csv";
    if (csv_out) {
      write_report_csv(report, out_path);
      if (!sim_summary.empty()) emit(summary, sim_summary);
      std::cout << summary.dump(2) << "\n";
    } else {
      emit(summary, out_path);
      if (!sim_summary.empty()) emit(summary, sim_summary);
    }
    return kExitOk;
  }

  if (cmd_asy->parsed()) {
    AsymptoticProblem problem;
    problem.gamma = asy_gamma;
    problem.tau = asy_tau;
    problem.sigma_eps = asy_sigma;
    problem.lambda_scaled = asy_lambda;
    problem.beta_second_moment = asy_m2;
    const AsymptoticSolution sol = solve_asymptotic(problem);
    const LimitingDualLaw law(sol, problem);
    json j{{"beta0_star", sol.beta0_star},
           {"m_u_star", sol.m_u_star},
           {"rho1_star", sol.rho1_star},
           {"m_eta_star", sol.m_eta_star},
           {"rho2_star", sol.rho2_star},
           {"objective_value", sol.objective_value},
           {"predicted_coverage", sol.predicted_coverage},
           {"degenerate", sol.degenerate},
           {"widenings", sol.widenings}};
    j["dual_law"] = {{"mass_lower", law.mass_lower()},
                     {"mass_upper", law.mass_upper()},
                     {"prob_nonpositive", law.prob_nonpositive()}};
    json quantiles = json::array();
    for (double q : parse_double_list(asy_quantiles)) {
      quantiles.push_back({{"level", q}, {"value", law.quantile(q)}});
    }
    j["dual_law"]["quantiles"] = quantiles;
    emit(j, out_path);
    return kExitOk;
  }

  if (cmd_eval->parsed()) {
    const Matrix bounds = load_csv_features(eval_pred, {"lower", "upper"});
    const Dataset test = load_csv(eval_csv, eval_response);
    if (bounds.rows() != test.n_samples()) {
      throw DataError("evaluate: prediction and test row counts disagree");
    }
    IntervalList intervals(bounds.rows());
    for (Eigen::Index i = 0; i < bounds.rows(); ++i) {
      intervals[i] = {bounds(i, 0), bounds(i, 1)};
    }
    const IntervalReport report =
        evaluate(intervals, test.response, test.features, eval_alpha);
    emit(json{{"coverage", report.coverage},
              {"median_length", report.median_length},
              {"multiaccuracy", report.multiaccuracy}},
         out_path);
    return kExitOk;
  }

  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::CallForHelp&) {
    return kExitOk;
  } catch (const qrdual::DataError& e) {
    std::cerr << json{{"error", {{"code", "data_error"}, {"message", e.what()}}}}.dump() << "\n";
    return kExitData;
  } catch (const qrdual::SolverError& e) {
    std::cerr << json{{"error", {{"code", "solver_error"}, {"message", e.what()}}}}.dump()
              << "\n";
    return kExitSolver;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", {{"code", "usage_error"}, {"message", e.what()}}}}.dump()
              << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal_error"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
}
