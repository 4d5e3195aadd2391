#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "qrdual/dataset.hpp"
#include "qrdual/solver.hpp"

namespace qrdual {

enum class CalibrationMethod {
  kLevelAdjust,
  kLevelRidge,
  kAdditiveAdjust,
  kAdditiveRidge,
  kBaiClosedForm,
};

struct SearchProbe {
  double parameter;     // tau_adj or c
  double loo_coverage;
};

struct LambdaProbe {
  double lambda;
  double parameter;       // inner tau_adj or c chosen at this lambda
  double loo_coverage;
  double multiaccuracy;
  bool in_lambda_tau;     // |loo_coverage - tau| <= 1/n
};

struct CalibrationResult {
  CalibrationMethod method = CalibrationMethod::kLevelAdjust;
  std::optional<double> tau_adj;
  std::optional<double> c;
  std::optional<double> lambda;
  FitResult final_fit;
  double loo_coverage = 0.0;
  std::optional<double> loo_multiaccuracy;
  std::vector<SearchProbe> search_trace;   // inner search of the winning lambda
  std::vector<LambdaProbe> lambda_trace;   // one row per grid point (ridge methods)

  // Flags. Saturation means even the extreme parameter could not reach the
  // target coverage; lambda_tau_empty means no grid point hit the 1/n band.
  bool saturated_low = false;
  bool saturated_high = false;
  bool lambda_tau_empty = false;
  bool clipped = false;  // Bai value left (0,1) and was clipped
};

/// Closed-form small-aspect-ratio level adjustment (tau - d/2n)/(1 - d/2n),
/// clipped into [1/(n+1), 1 - 1/(n+1)]. *clipped reports whether clipping hit.
double bai_level(double tau, int d, int n, bool* clipped = nullptr);

/// Binary search over tau_adj in [1/(n+1), 1-1/(n+1)] for the level whose
/// dual-sign LOO coverage is closest to tau; stops at |cov - tau| <= 1/n or
/// after 30 bisections, keeping the best probe. Endpoints are probed first so
/// saturation is detected exactly.
CalibrationResult calibrate_level(const Dataset& data, double tau, double lambda,
                                  const SolverConfig& config);

/// Two-step procedure: per-lambda level search, then the multiaccuracy
/// minimizer over the grid points whose coverage gap is within 1/n.
CalibrationResult calibrate_level_ridge(const Dataset& data, double tau,
                                        const std::vector<double>& lambda_grid,
                                        const SolverConfig& config);

/// Binary search over the additive offset c (intercept-less fits).
CalibrationResult calibrate_additive(const Dataset& data, double tau, double lambda,
                                     std::pair<double, double> c_range,
                                     const SolverConfig& config);

CalibrationResult calibrate_additive_ridge(const Dataset& data, double tau,
                                           const std::vector<double>& lambda_grid,
                                           std::pair<double, double> c_range,
                                           const SolverConfig& config);

/// The figure-caption default: lambda in n * {0, step, 2*step, ..., max}.
std::vector<double> default_lambda_grid(Eigen::Index n, double max_scaled = 0.1,
                                        double step = 0.005);

inline constexpr std::pair<double, double> kDefaultAdditiveRange{-10.0, 10.0};

}  // namespace qrdual
