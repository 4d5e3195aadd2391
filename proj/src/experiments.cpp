#include "qrdual/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "qrdual/calibrate.hpp"
#include "qrdual/conformal.hpp"
#include "qrdual/errors.hpp"
#include "qrdual/loo.hpp"
#include "qrdual/metrics.hpp"
#include "qrdual/parallel.hpp"
#include "qrdual/quantile.hpp"
#include "qrdual/rng.hpp"

namespace qrdual {

void CertStats::absorb(const KktCertificate& cert) {
  ++fits;
  max_primal = std::max(max_primal, cert.primal_residual / cert.response_scale);
  max_stationarity =
      std::max(max_stationarity, cert.stationarity_norm /
                                     (cert.design_scale * std::max(1.0, cert.response_scale)));
  max_gap = std::max(max_gap, cert.duality_gap_per_sample);
  max_box = std::max(max_box, cert.box_violation);
}

void CertStats::merge(const CertStats& other) {
  fits += other.fits;
  max_primal = std::max(max_primal, other.max_primal);
  max_stationarity = std::max(max_stationarity, other.max_stationarity);
  max_gap = std::max(max_gap, other.max_gap);
  max_box = std::max(max_box, other.max_box);
}

TrialData generate(const SimConfig& config, int trial_index) {
  if (config.n < 1 || config.n_test < 1 || config.trials < 1) {
    throw std::invalid_argument("generate: n, n_test, trials must be positive");
  }
  RandomStream rng(derive_seed(config.seed, static_cast<std::uint64_t>(trial_index)));
  const int d = config.d;

  Vector beta(d);
  const double inv_sqrt_d = d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0;
  for (int j = 0; j < d; ++j) beta(j) = inv_sqrt_d * rng.normal();

  auto draw = [&](int rows) {
    Matrix x(rows, d);
    Vector y(rows);
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) {
        x(i, j) = rng.normal();
        dot += x(i, j) * beta(j);
      }
      y(i) = dot + config.sigma_eps * rng.normal();
    }
    return make_dataset(std::move(x), std::move(y));
  };

  TrialData out;
  out.train = draw(config.n);
  out.test = draw(config.n_test);
  out.beta_true = beta;
  return out;
}

FigureId parse_figure_id(const std::string& name) {
  std::string s;
  for (char c : name) s.push_back(static_cast<char>(std::tolower(c)));
  if (s == "fig1" || s == "1") return FigureId::kFig1;
  if (s == "fig2" || s == "2") return FigureId::kFig2;
  if (s == "fig3" || s == "3") return FigureId::kFig3;
  if (s == "fig4" || s == "4") return FigureId::kFig4;
  if (s == "fig5" || s == "5") return FigureId::kFig5;
  if (s == "fig6" || s == "6") return FigureId::kFig6;
  if (s == "fig7" || s == "7" || s == "fig7-style" || s == "real") return FigureId::kFig7Style;
  throw std::invalid_argument("unknown figure id: " + name);
}

std::string figure_name(FigureId id) {
  switch (id) {
    case FigureId::kFig1: return "fig1";
    case FigureId::kFig2: return "fig2";
    case FigureId::kFig3: return "fig3";
    case FigureId::kFig4: return "fig4";
    case FigureId::kFig5: return "fig5";
    case FigureId::kFig6: return "fig6";
    case FigureId::kFig7Style: return "fig7-style";
  }
  return "unknown";
}

namespace {

struct TrialOutcome {
  std::vector<ReportRow> rows;
  CertStats cert;
  bool failed = false;
  std::string error;
};

template <typename Fn>
void run_trials(int trials, ExperimentReport& report, const Fn& fn) {
  std::vector<TrialOutcome> outcomes(trials);
  parallel_for(0, trials, [&](int t) {
    try {
      outcomes[t] = fn(t);
    } catch (const std::exception& e) {
      outcomes[t].failed = true;
      outcomes[t].error = e.what();
    }
  });
  int failed = 0;
  std::string first_error;
  for (auto& out : outcomes) {
    if (out.failed) {
      ++failed;
      if (first_error.empty()) first_error = out.error;
      continue;
    }
    report.rows.insert(report.rows.end(), out.rows.begin(), out.rows.end());
    report.cert_stats.merge(out.cert);
  }
  report.failed_trials = failed;
  if (failed == trials) {
    throw std::runtime_error("run_figure: every trial failed; first error: " + first_error);
  }
}

std::string setting_label(const std::string& key, double value) {
  std::ostringstream ss;
  ss << key << "=" << value;
  return ss.str();
}

double onesided_coverage(const Vector& preds, const Vector& y) {
  int covered = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) covered += y(i) <= preds(i) ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(y.size());
}

double onesided_multiaccuracy(const std::vector<bool>& covered, const Matrix& x, double tau) {
  const auto n = static_cast<Eigen::Index>(covered.size());
  Vector centered(n);
  for (Eigen::Index i = 0; i < n; ++i) centered(i) = (covered[i] ? 1.0 : 0.0) - tau;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double denom = x.col(j).cwiseAbs().mean();
    if (denom == 0.0) continue;
    worst = std::max(worst, std::abs(x.col(j).dot(centered)) / (n * denom));
  }
  return worst;
}

std::vector<bool> onesided_covered_flags(const Vector& preds, const Vector& y) {
  std::vector<bool> covered(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) covered[i] = y(i) <= preds(i);
  return covered;
}

Vector predict_rows(const FitResult& fit_result, const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = fit_result.predict(x.row(i).transpose());
  return out;
}

struct FigureContext {
  SimConfig sim;
  SolverConfig solver;
  std::vector<double> lambda_grid_for(Eigen::Index n) const {
    return default_lambda_grid(n, grid_max, grid_step);
  }
  double grid_max = 0.1;
  double grid_step = 0.005;
  std::pair<double, double> c_range{-10.0, 10.0};
};

FigureContext make_context(const FigureOverrides& o, const SimConfig& defaults) {
  FigureContext ctx;
  ctx.sim = defaults;
  if (o.n) ctx.sim.n = *o.n;
  if (o.n_test) ctx.sim.n_test = *o.n_test;
  if (o.trials) ctx.sim.trials = *o.trials;
  if (o.tau) ctx.sim.tau = *o.tau;
  if (o.alpha) ctx.sim.alpha = *o.alpha;
  if (o.sigma_eps) ctx.sim.sigma_eps = *o.sigma_eps;
  if (o.seed) ctx.sim.seed = *o.seed;
  ctx.solver.tolerance = o.solver_tolerance.value_or(1e-8);
  if (o.grid_max) ctx.grid_max = *o.grid_max;
  if (o.grid_step) ctx.grid_step = *o.grid_step;
  if (o.c_range) ctx.c_range = *o.c_range;
  return ctx;
}

SimConfig dim_config(const FigureContext& ctx, int d) {
  SimConfig sc = ctx.sim;
  sc.d = d;
  // Distinct stream per dimension so changing the dim list never reshuffles
  // other settings' data.
  sc.seed = derive_seed(ctx.sim.seed, 0xD000000ull + static_cast<std::uint64_t>(d));
  return sc;
}

// ---------------------------------------------------------------------------
// Figure 1: plain QR miscoverage across dimensions.

ExperimentReport figure1(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 300;
  defaults.trials = 100;
  defaults.n_test = 2000;
  FigureContext ctx = make_context(o, defaults);
  std::vector<int> dims = o.dims.empty() ? std::vector<int>{1, 15, 30, 90} : o.dims;

  ExperimentReport report;
  report.figure = FigureId::kFig1;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (int d : dims) {
      const TrialData td = generate(dim_config(ctx, d), trial);
      ProblemSpec spec;
      spec.tau = ctx.sim.tau;
      const FitResult qr = fit(td.train, spec, ctx.solver);
      out.cert.absorb(qr.kkt);
      const Vector preds = predict_rows(qr, td.test.features);
      ReportRow row;
      row.trial = trial;
      row.setting = setting_label("d", d);
      row.knob = d;
      row.method = "qr";
      row.coverage = onesided_coverage(preds, td.test.response);
      row.multiaccuracy = onesided_multiaccuracy(onesided_covered_flags(preds, td.test.response),
                                                 td.test.features, ctx.sim.tau);
      out.rows.push_back(row);
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 2: sole level adjustment (lambda = 0) across dimensions.

ExperimentReport figure2(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 300;
  defaults.trials = 100;
  defaults.n_test = 2000;
  FigureContext ctx = make_context(o, defaults);
  std::vector<int> dims = o.dims.empty() ? std::vector<int>{1, 15, 30, 60, 90} : o.dims;

  ExperimentReport report;
  report.figure = FigureId::kFig2;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (int d : dims) {
      const TrialData td = generate(dim_config(ctx, d), trial);
      const CalibrationResult cal = calibrate_level(td.train, ctx.sim.tau, 0.0, ctx.solver);
      out.cert.absorb(cal.final_fit.kkt);
      const Vector preds = predict_rows(cal.final_fit, td.test.features);
      ReportRow row;
      row.trial = trial;
      row.setting = setting_label("d", d);
      row.knob = d;
      row.method = "level";
      row.coverage = onesided_coverage(preds, td.test.response);
      row.tau_adj = cal.tau_adj.value_or(std::numeric_limits<double>::quiet_NaN());
      row.extra = cal.loo_coverage;
      row.extra_name = "loo_coverage";
      row.flagged = cal.saturated_high || cal.saturated_low;
      out.rows.push_back(row);
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 3: estimation error of level-only vs regularization-only vs joint
// tuning.

ExperimentReport figure3(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 300;
  defaults.trials = 100;
  defaults.n_test = 1;  // unused; estimation error is against beta_true
  FigureContext ctx = make_context(o, defaults);
  std::vector<int> dims = o.dims.empty() ? std::vector<int>{10, 30, 60, 90} : o.dims;

  ExperimentReport report;
  report.figure = FigureId::kFig3;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (int d : dims) {
      const TrialData td = generate(dim_config(ctx, d), trial);
      const auto grid = ctx.lambda_grid_for(td.train.n_samples());
      const double n = static_cast<double>(td.train.n_samples());

      auto push = [&](const std::string& method, const FitResult& fr, double tau_adj,
                      double lambda, bool flagged) {
        out.cert.absorb(fr.kkt);
        ReportRow row;
        row.trial = trial;
        row.setting = setting_label("d", d);
        row.knob = d;
        row.method = method;
        row.tau_adj = tau_adj;
        row.lambda = lambda;
        row.extra = (fr.beta - td.beta_true).norm();
        row.extra_name = "estimation_error";
        row.flagged = flagged;
        out.rows.push_back(row);
      };

      const CalibrationResult level = calibrate_level(td.train, ctx.sim.tau, 0.0, ctx.solver);
      push("level", level.final_fit, level.tau_adj.value_or(ctx.sim.tau), 0.0,
           level.saturated_high);

      // Smallest grid lambda whose LOO coverage at the nominal level reaches
      // tau - 1/n.
      {
        FitResult best;
        double chosen = grid.back();
        bool reached = false;
        for (double lambda : grid) {
          ProblemSpec spec;
          spec.tau = ctx.sim.tau;
          spec.lambda = lambda;
          SolverConfig cfg = ctx.solver;
          cfg.warm_start = best.duals.size() > 0 ? &best : nullptr;
          best = fit(td.train, spec, cfg);
          out.cert.absorb(best.kkt);
          if (loo_coverage_dual(best).coverage >= ctx.sim.tau - 1.0 / n) {
            chosen = lambda;
            reached = true;
            break;
          }
        }
        push("reg_only", best, ctx.sim.tau, chosen, !reached);
      }

      const CalibrationResult joint =
          calibrate_level_ridge(td.train, ctx.sim.tau, grid, ctx.solver);
      push("level_ridge", joint.final_fit, joint.tau_adj.value_or(ctx.sim.tau),
           joint.lambda.value_or(0.0), joint.lambda_tau_empty);
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 4: sole additive adjustment; saturation of c at higher dimensions,
// plus a fixed-c sweep at the largest dimension.

ExperimentReport figure4(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 200;
  defaults.trials = 100;
  defaults.n_test = 2000;
  FigureContext ctx = make_context(o, defaults);
  std::vector<int> dims = o.dims.empty() ? std::vector<int>{10, 30, 60, 90} : o.dims;
  const int sweep_trials = std::min(ctx.sim.trials, 25);
  const std::vector<double> c_sweep{-10.0, -6.0, -3.0, 0.0, 3.0, 6.0, 10.0};

  ExperimentReport report;
  report.figure = FigureId::kFig4;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (int d : dims) {
      const TrialData td = generate(dim_config(ctx, d), trial);
      const CalibrationResult cal =
          calibrate_additive(td.train, ctx.sim.tau, 0.0, ctx.c_range, ctx.solver);
      out.cert.absorb(cal.final_fit.kkt);
      const Vector preds = predict_rows(cal.final_fit, td.test.features);
      ReportRow row;
      row.trial = trial;
      row.setting = setting_label("d", d);
      row.knob = d;
      row.method = "additive";
      row.coverage = onesided_coverage(preds, td.test.response);
      row.c = cal.c.value_or(std::numeric_limits<double>::quiet_NaN());
      row.extra = cal.loo_coverage;
      row.extra_name = "loo_coverage";
      row.flagged = cal.saturated_high || cal.saturated_low;
      out.rows.push_back(row);

      if (d == dims.back() && trial < sweep_trials) {
        FitResult warm;
        for (double c : c_sweep) {
          ProblemSpec spec;
          spec.tau = ctx.sim.tau;
          spec.intercept_mode = InterceptMode::kFixedOffset;
          spec.offset = c;
          SolverConfig cfg = ctx.solver;
          cfg.warm_start = warm.duals.size() > 0 ? &warm : nullptr;
          warm = fit(td.train, spec, cfg);
          out.cert.absorb(warm.kkt);
          const Vector sweep_preds = predict_rows(warm, td.test.features);
          ReportRow sweep_row;
          sweep_row.trial = trial;
          sweep_row.setting = setting_label("c", c);
          sweep_row.knob = c;
          sweep_row.method = "additive_fixed_c";
          sweep_row.coverage = onesided_coverage(sweep_preds, td.test.response);
          sweep_row.c = c;
          out.rows.push_back(sweep_row);
        }
      }
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 5: randomized-GCC dependence on the cutoff U. Coverage conditional
// on u comes from one augmented fit per repetition; the cutoff curve is
// estimated on a subset of repetitions.

ExperimentReport figure5(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 200;
  defaults.d = 40;
  defaults.trials = 2000;
  defaults.n_test = 1;
  FigureContext ctx = make_context(o, defaults);
  if (!o.dims.empty()) ctx.sim.d = o.dims.front();
  const int cutoff_reps = o.cutoff_reps.value_or(std::min(ctx.sim.trials, 200));
  const int u_points = o.u_points.value_or(9);

  std::vector<double> u_grid(u_points);
  const double lo = -(1.0 - ctx.sim.tau);
  for (int k = 0; k < u_points; ++k) {
    u_grid[k] = lo + (k + 1.0) / (u_points + 1.0);  // interior of the length-1 box
  }

  ExperimentReport report;
  report.figure = FigureId::kFig5;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    SimConfig sc = ctx.sim;
    sc.n_test = 1;
    const TrialData td = generate(sc, trial);
    ProblemSpec spec;
    spec.tau = ctx.sim.tau;
    ConformalScorer scorer(td.train, spec, ctx.solver);
    out.cert.absorb(scorer.train_fit().kkt);
    const Vector x_new = td.test.features.row(0).transpose();
    const double eta_at_y = scorer.dual_at(x_new, td.test.response(0));
    out.cert.absorb(scorer.last_certificate());
    for (double u : u_grid) {
      ReportRow row;
      row.trial = trial;
      row.setting = setting_label("u", u);
      row.knob = u;
      row.method = "gcc_rand";
      row.coverage = eta_at_y <= u ? 1.0 : 0.0;
      if (trial < cutoff_reps) {
        const ThresholdPrediction cutoff = scorer.predict_at_threshold(x_new, u);
        out.cert.absorb(scorer.last_certificate());
        row.extra = cutoff.as_double();
        row.extra_name = "cutoff";
      }
      out.rows.push_back(row);
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 6: one-sided comparison of plain QR against the three corrections.

void figure6_setting(const FigureContext& ctx, int n, int d, const std::string& setting,
                     double knob, int trial, TrialOutcome& out) {
  SimConfig sc = ctx.sim;
  sc.n = n;
  sc.d = d;
  sc.seed = derive_seed(ctx.sim.seed,
                        0xF60000ull + 1000003ull * static_cast<std::uint64_t>(n) +
                            static_cast<std::uint64_t>(d));
  const TrialData td = generate(sc, trial);
  const auto grid = default_lambda_grid(td.train.n_samples(), ctx.grid_max, ctx.grid_step);
  const double tau = ctx.sim.tau;

  auto base_row = [&](const std::string& method) {
    ReportRow row;
    row.trial = trial;
    row.setting = setting;
    row.knob = knob;
    row.method = method;
    return row;
  };

  {
    ProblemSpec spec;
    spec.tau = tau;
    const FitResult qr = fit(td.train, spec, ctx.solver);
    out.cert.absorb(qr.kkt);
    const Vector preds = predict_rows(qr, td.test.features);
    ReportRow row = base_row("qr");
    row.coverage = onesided_coverage(preds, td.test.response);
    row.multiaccuracy = onesided_multiaccuracy(onesided_covered_flags(preds, td.test.response),
                                               td.test.features, tau);
    out.rows.push_back(row);
  }
  {
    const CalibrationResult cal = calibrate_level_ridge(td.train, tau, grid, ctx.solver);
    out.cert.absorb(cal.final_fit.kkt);
    const Vector preds = predict_rows(cal.final_fit, td.test.features);
    ReportRow row = base_row("level_ridge");
    row.coverage = onesided_coverage(preds, td.test.response);
    row.multiaccuracy = onesided_multiaccuracy(onesided_covered_flags(preds, td.test.response),
                                               td.test.features, tau);
    row.tau_adj = cal.tau_adj.value_or(std::numeric_limits<double>::quiet_NaN());
    row.lambda = cal.lambda.value_or(std::numeric_limits<double>::quiet_NaN());
    row.extra = cal.loo_coverage;
    row.extra_name = "loo_coverage";
    row.flagged = cal.lambda_tau_empty || cal.saturated_high;
    out.rows.push_back(row);
  }
  {
    const CalibrationResult cal =
        calibrate_additive_ridge(td.train, tau, grid, ctx.c_range, ctx.solver);
    out.cert.absorb(cal.final_fit.kkt);
    const Vector preds = predict_rows(cal.final_fit, td.test.features);
    ReportRow row = base_row("additive_ridge");
    row.coverage = onesided_coverage(preds, td.test.response);
    row.multiaccuracy = onesided_multiaccuracy(onesided_covered_flags(preds, td.test.response),
                                               td.test.features, tau);
    row.c = cal.c.value_or(std::numeric_limits<double>::quiet_NaN());
    row.lambda = cal.lambda.value_or(std::numeric_limits<double>::quiet_NaN());
    row.extra = cal.loo_coverage;
    row.extra_name = "loo_coverage";
    row.flagged = cal.lambda_tau_empty || cal.saturated_high;
    out.rows.push_back(row);
  }
  {
    // Coverage through the dual-path equivalence: Y <= qhat(t) iff the
    // augmented dual at Y stays below t. One augmented fit per test point.
    ProblemSpec spec;
    spec.tau = tau;
    ConformalScorer scorer(td.train, spec, ctx.solver);
    out.cert.absorb(scorer.train_fit().kkt);
    const double t_hat = scorer.threshold_hat();
    std::vector<bool> covered(td.test.n_samples());
    for (Eigen::Index i = 0; i < td.test.n_samples(); ++i) {
      const double eta =
          scorer.dual_at(td.test.features.row(i).transpose(), td.test.response(i));
      out.cert.absorb(scorer.last_certificate());
      covered[i] = eta <= t_hat;
    }
    ReportRow row = base_row("fixed_thresh");
    int count = 0;
    for (bool b : covered) count += b ? 1 : 0;
    row.coverage = static_cast<double>(count) / static_cast<double>(covered.size());
    row.multiaccuracy = onesided_multiaccuracy(covered, td.test.features, tau);
    row.extra = t_hat;
    row.extra_name = "t_hat";
    out.rows.push_back(row);
  }
}

ExperimentReport figure6(const FigureOverrides& o) {
  SimConfig defaults;
  defaults.n = 200;
  defaults.trials = 200;
  defaults.n_test = 2000;
  FigureContext ctx = make_context(o, defaults);
  std::vector<int> dims = o.dims.empty() ? std::vector<int>{20, 40, 80} : o.dims;
  std::vector<int> sizes = o.sample_sizes;  // right panel, optional

  ExperimentReport report;
  report.figure = FigureId::kFig6;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (int d : dims) {
      figure6_setting(ctx, ctx.sim.n, d, setting_label("d", d), d, trial, out);
    }
    for (int n : sizes) {
      const int d = std::max(1, n / 10);  // fixed aspect ratio 0.1
      figure6_setting(ctx, n, d, setting_label("n", n), n, trial, out);
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

// ---------------------------------------------------------------------------
// Figure 7 style: real-data CSV with random splits and random feature
// subsets, two-sided intervals at level alpha.

ExperimentReport figure7(const FigureOverrides& o) {
  if (o.csv_path.empty() || o.response_column.empty()) {
    throw DataError("fig7-style runs need --csv and --response");
  }
  SimConfig defaults;
  defaults.trials = 20;
  FigureContext ctx = make_context(o, defaults);
  const Dataset full = load_csv(o.csv_path, o.response_column);
  const auto n_total = static_cast<int>(full.n_samples());
  const auto d_total = static_cast<int>(full.n_features());
  const int train_size = o.train_size.value_or(std::min(400, n_total / 2));
  if (train_size < 2 || train_size >= n_total) {
    throw DataError("fig7-style: train size must be in [2, n)");
  }
  std::vector<int> dims = o.dims;
  if (dims.empty()) {
    for (int d : {10, 25, 55}) {
      if (d <= d_total) dims.push_back(d);
    }
    if (dims.empty()) dims.push_back(d_total);
  }
  const int eval_cap = o.eval_cap.value_or(250);

  ExperimentReport report;
  report.figure = FigureId::kFig7Style;
  report.config = ctx.sim;
  run_trials(ctx.sim.trials, report, [&](int trial) {
    TrialOutcome out;
    for (std::size_t di = 0; di < dims.size(); ++di) {
      const int d_sub = dims[di];
      RandomStream rng(derive_seed(ctx.sim.seed,
                                   0x700000ull + 1000003ull * (di + 1) +
                                       static_cast<std::uint64_t>(trial)));
      // Row permutation.
      std::vector<int> order(n_total);
      std::iota(order.begin(), order.end(), 0);
      for (int i = n_total - 1; i > 0; --i) {
        std::swap(order[i], order[rng.uniform_index(i + 1)]);
      }
      // Feature subset, uniform without replacement.
      std::vector<int> cols(d_total);
      std::iota(cols.begin(), cols.end(), 0);
      for (int i = d_total - 1; i > 0; --i) {
        std::swap(cols[i], cols[rng.uniform_index(i + 1)]);
      }
      cols.resize(d_sub);

      const int n_test = std::min(eval_cap, n_total - train_size);
      Matrix x_train(train_size, d_sub), x_test(n_test, d_sub);
      Vector y_train(train_size), y_test(n_test);
      for (int i = 0; i < train_size; ++i) {
        for (int j = 0; j < d_sub; ++j) x_train(i, j) = full.features(order[i], cols[j]);
        y_train(i) = full.response(order[i]);
      }
      for (int i = 0; i < n_test; ++i) {
        const int src = order[train_size + i];
        for (int j = 0; j < d_sub; ++j) x_test(i, j) = full.features(src, cols[j]);
        y_test(i) = full.response(src);
      }
      const Dataset train = normalize(make_dataset(std::move(x_train), std::move(y_train)));
      const Dataset test = apply_normalization(make_dataset(std::move(x_test), std::move(y_test)),
                                               train.feature_scaling, train.response_scaling);

      IntervalOptions opts;
      opts.lambda_grid = default_lambda_grid(train.n_samples(), ctx.grid_max, ctx.grid_step);
      opts.c_range = ctx.c_range;
      opts.seed = derive_seed(ctx.sim.seed, 0x6ccull + trial);

      const std::vector<std::pair<std::string, IntervalMethod>> methods{
          {"qr", IntervalMethod::kQr},
          {"cqr", IntervalMethod::kCqr},
          {"gcc_rand", IntervalMethod::kGccRand},
          {"fixed_thresh", IntervalMethod::kFixedThresh},
          {"level_ridge", IntervalMethod::kLevelRidge},
          {"additive_ridge", IntervalMethod::kAdditiveRidge},
      };
      for (const auto& [name, method] : methods) {
        const IntervalList intervals =
            interval_predict(method, train, ctx.sim.alpha, ctx.solver, test.features, opts);
        const IntervalReport ir = evaluate(intervals, test.response, test.features, ctx.sim.alpha);
        ReportRow row;
        row.trial = trial;
        row.setting = setting_label("d", d_sub);
        row.knob = d_sub;
        row.method = name;
        row.coverage = ir.coverage;
        row.median_length = ir.median_length;
        row.multiaccuracy = ir.multiaccuracy;
        out.rows.push_back(row);
      }
    }
    return out;
  });
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

}  // namespace

std::vector<AggregateRow> compute_aggregates(const std::vector<ReportRow>& rows) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ReportRow*>> groups;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.setting, row.method);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&row);
  }

  auto nan_mean = [](const std::vector<const ReportRow*>& group, auto accessor) {
    double sum = 0.0;
    int count = 0;
    for (const ReportRow* row : group) {
      const double v = accessor(*row);
      if (std::isnan(v)) continue;
      sum += v;
      ++count;
    }
    return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  };

  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& group = groups[key];
    AggregateRow agg;
    agg.setting = key.first;
    agg.method = key.second;
    agg.knob = group.front()->knob;
    agg.count = static_cast<int>(group.size());
    agg.mean_coverage = nan_mean(group, [](const ReportRow& r) { return r.coverage; });
    agg.mean_miscoverage = 1.0 - agg.mean_coverage;

    std::vector<double> miscov;
    for (const ReportRow* row : group) {
      if (!std::isnan(row->coverage)) miscov.push_back(1.0 - row->coverage);
    }
    if (!miscov.empty()) {
      double var = 0.0;
      for (double m : miscov) var += (m - agg.mean_miscoverage) * (m - agg.mean_miscoverage);
      agg.se_coverage = miscov.size() > 1
                            ? std::sqrt(var / (miscov.size() - 1.0) / miscov.size())
                            : 0.0;
      agg.miscoverage_q25 = empirical_quantile(0.25, miscov);
      agg.miscoverage_q50 = empirical_quantile(0.50, miscov);
      agg.miscoverage_q75 = empirical_quantile(0.75, miscov);
    }
    agg.mean_length = nan_mean(group, [](const ReportRow& r) { return r.median_length; });
    agg.mean_multiaccuracy =
        nan_mean(group, [](const ReportRow& r) { return r.multiaccuracy; });
    agg.mean_tau_adj = nan_mean(group, [](const ReportRow& r) { return r.tau_adj; });
    agg.mean_c = nan_mean(group, [](const ReportRow& r) { return r.c; });
    agg.mean_lambda = nan_mean(group, [](const ReportRow& r) { return r.lambda; });
    agg.mean_extra = nan_mean(group, [](const ReportRow& r) { return r.extra; });
    for (const ReportRow* row : group) agg.flag_count += row->flagged ? 1 : 0;
    out.push_back(agg);
  }
  return out;
}

ExperimentReport run_figure(FigureId figure, const FigureOverrides& overrides) {
  switch (figure) {
    case FigureId::kFig1: return figure1(overrides);
    case FigureId::kFig2: return figure2(overrides);
    case FigureId::kFig3: return figure3(overrides);
    case FigureId::kFig4: return figure4(overrides);
    case FigureId::kFig5: return figure5(overrides);
    case FigureId::kFig6: return figure6(overrides);
    case FigureId::kFig7Style: return figure7(overrides);
  }
  throw std::invalid_argument("run_figure: unknown figure");
}

void write_report_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open report path '" + path + "'");
  out << "trial,setting,knob,method,coverage,miscoverage,median_length,multiaccuracy,"
         "tau_adj,c,lambda,extra,extra_name,flagged\n";
  auto cell = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream ss;
    ss.precision(12);
    ss << v;
    return ss.str();
  };
  for (const auto& row : report.rows) {
    out << row.trial << ',' << row.setting << ',' << cell(row.knob) << ',' << row.method << ','
        << cell(row.coverage) << ','
        << cell(std::isnan(row.coverage) ? row.coverage : 1.0 - row.coverage) << ','
        << cell(row.median_length) << ',' << cell(row.multiaccuracy) << ','
        << cell(row.tau_adj) << ',' << cell(row.c) << ',' << cell(row.lambda) << ','
        << cell(row.extra) << ',' << row.extra_name << ',' << (row.flagged ? 1 : 0) << '\n';
  }
}

}  // namespace qrdual
