#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qrdual/dataset.hpp"
#include "qrdual/solver.hpp"

namespace qrdual {

/// Gaussian linear model of the figure captions: X ~ N(0, I_d),
/// beta ~ N(0, I_d/d) fresh per trial, Y = X beta + eps, eps ~ N(0, sigma^2).
struct SimConfig {
  int n = 200;
  int d = 20;
  int n_test = 2000;
  int trials = 100;
  double tau = 0.9;
  double alpha = 0.1;
  double sigma_eps = 1.0;
  std::uint64_t seed = 1;
};

struct TrialData {
  Dataset train;
  Dataset test;
  Vector beta_true;
};

/// Deterministic given (config.seed, trial_index); independent across trials
/// via counter-based seed splitting.
TrialData generate(const SimConfig& config, int trial_index);

enum class FigureId { kFig1, kFig2, kFig3, kFig4, kFig5, kFig6, kFig7Style };

FigureId parse_figure_id(const std::string& name);
std::string figure_name(FigureId id);

struct FigureOverrides {
  std::optional<int> n;
  std::optional<int> n_test;
  std::optional<int> trials;
  std::vector<int> dims;             // x-axis dimensions (figure dependent)
  std::vector<int> sample_sizes;     // fig6 right panel: n at fixed d/n
  std::optional<double> tau;
  std::optional<double> alpha;
  std::optional<double> sigma_eps;
  std::optional<std::uint64_t> seed;
  std::optional<double> grid_max;    // scaled lambda-grid cap (default 0.1)
  std::optional<double> grid_step;   // default 0.005
  std::optional<std::pair<double, double>> c_range;
  std::optional<double> solver_tolerance;

  // fig5 knobs
  std::optional<int> cutoff_reps;    // repetitions used for the cutoff curve
  std::optional<int> u_points;

  // fig7-style real-data knobs
  std::string csv_path;
  std::string response_column;
  std::optional<int> train_size;
  std::optional<int> eval_cap;       // max test rows scored by per-point methods
};

struct ReportRow {
  int trial = 0;
  std::string setting;   // x-axis label, e.g. "d=40"
  double knob = 0.0;     // numeric x-axis value
  std::string method;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double median_length = std::numeric_limits<double>::quiet_NaN();
  double multiaccuracy = std::numeric_limits<double>::quiet_NaN();
  double tau_adj = std::numeric_limits<double>::quiet_NaN();
  double c = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double extra = std::numeric_limits<double>::quiet_NaN();
  std::string extra_name;
  bool flagged = false;
};

struct AggregateRow {
  std::string setting;
  double knob = 0.0;
  std::string method;
  int count = 0;
  double mean_coverage = 0.0;
  double se_coverage = 0.0;
  double mean_miscoverage = 0.0;
  double miscoverage_q25 = 0.0;
  double miscoverage_q50 = 0.0;
  double miscoverage_q75 = 0.0;
  double mean_length = 0.0;
  double mean_multiaccuracy = 0.0;
  double mean_tau_adj = 0.0;
  double mean_c = 0.0;
  double mean_lambda = 0.0;
  double mean_extra = 0.0;
  int flag_count = 0;
};

/// Worst-case solver certificate over every fit of a run, all residuals in
/// their scaled form.
struct CertStats {
  long long fits = 0;
  double max_primal = 0.0;
  double max_stationarity = 0.0;
  double max_gap = 0.0;
  double max_box = 0.0;

  void absorb(const KktCertificate& cert);
  void merge(const CertStats& other);
};

struct ExperimentReport {
  FigureId figure = FigureId::kFig1;
  SimConfig config;
  std::vector<ReportRow> rows;
  std::vector<AggregateRow> aggregates;
  CertStats cert_stats;
  int failed_trials = 0;
};

std::vector<AggregateRow> compute_aggregates(const std::vector<ReportRow>& rows);

ExperimentReport run_figure(FigureId figure, const FigureOverrides& overrides = {});

void write_report_csv(const ExperimentReport& report, const std::string& path);

}  // namespace qrdual
