#include "qrdual/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "qrdual/errors.hpp"
#include "qrdual/loo.hpp"

namespace qrdual {

double bai_level(double tau, int d, int n, bool* clipped) {
  if (n < 1) throw std::invalid_argument("bai_level: n must be >= 1");
  if (d < 0) throw std::invalid_argument("bai_level: d must be >= 0");
  const double lo = 1.0 / (n + 1.0);
  const double hi = 1.0 - 1.0 / (n + 1.0);
  const double half_ratio = 0.5 * static_cast<double>(d) / static_cast<double>(n);
  double value;
  if (half_ratio >= 1.0) {
    value = lo;
  } else {
    value = (tau - half_ratio) / (1.0 - half_ratio);
  }
  const double out = std::clamp(value, lo, hi);
  if (clipped != nullptr) *clipped = out != value;
  return out;
}

std::vector<double> default_lambda_grid(Eigen::Index n, double max_scaled, double step) {
  std::vector<double> grid;
  const int count = static_cast<int>(std::round(max_scaled / step));
  for (int k = 0; k <= count; ++k) {
    grid.push_back(static_cast<double>(n) * std::min(k * step, max_scaled));
  }
  return grid;
}

namespace {

constexpr int kMaxBisections = 30;

struct ProbeEval {
  double parameter = 0.0;
  double coverage = 0.0;
  FitResult fit;
};

// Monotone-coverage binary search shared by the level and additive
// calibrators. `make_spec` maps a parameter value to the ProblemSpec to fit.
// Endpoints are probed before bisecting, which makes saturation (the target
// unreachable inside the range) an exact diagnosis under monotonicity. The
// best probe by |coverage - tau| is kept throughout, so a non-monotone
// instance degrades to a grid-like search rather than failing.
template <typename MakeSpec>
CalibrationResult monotone_search(const Dataset& data, double tau, double range_lo,
                                  double range_hi, const SolverConfig& config,
                                  MakeSpec make_spec, std::optional<double> guess,
                                  const FitResult* initial_warm) {
  const double n = static_cast<double>(data.n_samples());
  const double cov_tol = 1.0 / n + 1e-12;

  CalibrationResult result;
  std::optional<ProbeEval> best;
  const FitResult* warm = initial_warm;
  FitResult last_fit;

  auto probe = [&](double p) -> ProbeEval {
    SolverConfig cfg = config;
    cfg.warm_start = warm;
    ProbeEval eval;
    eval.parameter = p;
    eval.fit = fit(data, make_spec(p), cfg);
    eval.coverage = loo_coverage_dual(eval.fit).coverage;
    last_fit = eval.fit;
    warm = &last_fit;
    result.search_trace.push_back({p, eval.coverage});
    if (!best || std::abs(eval.coverage - tau) < std::abs(best->coverage - tau)) {
      best = eval;
    }
    return eval;
  };

  auto finish = [&]() {
    result.final_fit = best->fit;
    result.loo_coverage = best->coverage;
    return best->parameter;
  };

  double lo = range_lo;
  double hi = range_hi;

  if (guess && *guess > range_lo && *guess < range_hi) {
    const ProbeEval e = probe(*guess);
    if (std::abs(e.coverage - tau) <= cov_tol) {
      finish();
      result.tau_adj = best->parameter;  // caller overwrites for additive
      return result;
    }
    (e.coverage < tau ? lo : hi) = *guess;
  }

  {
    const ProbeEval e = probe(range_hi);
    if (std::abs(e.coverage - tau) <= cov_tol) {
      finish();
      result.tau_adj = best->parameter;
      return result;
    }
    if (e.coverage < tau) {
      result.saturated_high = true;  // even the largest adjustment undercovers
      finish();
      result.tau_adj = best->parameter;
      return result;
    }
  }
  {
    const ProbeEval e = probe(range_lo);
    if (std::abs(e.coverage - tau) <= cov_tol) {
      finish();
      result.tau_adj = best->parameter;
      return result;
    }
    if (e.coverage > tau) {
      result.saturated_low = true;
      finish();
      result.tau_adj = best->parameter;
      return result;
    }
  }

  for (int step = 0; step < kMaxBisections; ++step) {
    const double mid = 0.5 * (lo + hi);
    const ProbeEval e = probe(mid);
    if (std::abs(e.coverage - tau) <= cov_tol) break;
    (e.coverage < tau ? lo : hi) = mid;
  }
  finish();
  result.tau_adj = best->parameter;
  return result;
}

CalibrationResult level_search(const Dataset& data, double tau, double lambda,
                               const SolverConfig& config, std::optional<double> guess,
                               const FitResult* warm) {
  data.validate();
  if (data.n_samples() < 2) throw DataError("calibrate_level: need n >= 2");
  const double n = static_cast<double>(data.n_samples());
  const double lo = 1.0 / (n + 1.0);
  const double hi = 1.0 - 1.0 / (n + 1.0);
  auto make_spec = [&](double tau_adj) {
    ProblemSpec spec;
    spec.tau = tau_adj;
    spec.lambda = lambda;
    spec.intercept_mode = InterceptMode::kFree;
    return spec;
  };
  CalibrationResult result =
      monotone_search(data, tau, lo, hi, config, make_spec, guess, warm);
  result.method = CalibrationMethod::kLevelAdjust;
  result.lambda = lambda;
  return result;
}

CalibrationResult additive_search(const Dataset& data, double tau, double lambda,
                                  std::pair<double, double> c_range,
                                  const SolverConfig& config, std::optional<double> guess,
                                  const FitResult* warm) {
  data.validate();
  if (data.n_samples() < 2) throw DataError("calibrate_additive: need n >= 2");
  if (!(c_range.first < c_range.second)) {
    throw std::invalid_argument("calibrate_additive: need c_lo < c_hi");
  }
  auto make_spec = [&](double c) {
    ProblemSpec spec;
    spec.tau = tau;
    spec.lambda = lambda;
    spec.intercept_mode = InterceptMode::kFixedOffset;
    spec.offset = c;
    return spec;
  };
  CalibrationResult result = monotone_search(data, tau, c_range.first, c_range.second,
                                             config, make_spec, guess, warm);
  result.method = CalibrationMethod::kAdditiveAdjust;
  result.c = result.tau_adj;
  result.tau_adj.reset();
  result.lambda = lambda;
  return result;
}

// Shared ridge-grid wrapper for both two-step procedures.
template <typename InnerSearch>
CalibrationResult ridge_grid(const Dataset& data, double tau,
                             const std::vector<double>& lambda_grid,
                             const SolverConfig& config, InnerSearch inner,
                             CalibrationMethod method) {
  if (lambda_grid.empty()) throw std::invalid_argument("ridge calibration: empty grid");
  std::vector<double> grid = lambda_grid;
  std::sort(grid.begin(), grid.end());

  const double n = static_cast<double>(data.n_samples());
  const double cov_tol = 1.0 / n + 1e-12;

  std::vector<CalibrationResult> fits;
  fits.reserve(grid.size());
  std::vector<LambdaProbe> trace;
  std::optional<SolverError> last_error;
  std::optional<double> guess;
  const FitResult* warm = nullptr;

  for (double lambda : grid) {
    try {
      CalibrationResult inner_result = inner(lambda, guess, warm);
      const double parameter = inner_result.tau_adj ? *inner_result.tau_adj : *inner_result.c;
      double ma = 0.0;
      if (data.n_features() > 0) {
        ma = loo_multiaccuracy(inner_result.final_fit, data, tau);
      }
      const bool in_band = std::abs(inner_result.loo_coverage - tau) <= cov_tol;
      trace.push_back({lambda, parameter, inner_result.loo_coverage, ma, in_band});
      guess = parameter;
      fits.push_back(std::move(inner_result));
      warm = &fits.back().final_fit;
    } catch (const SolverError& e) {
      last_error = e;  // skip-and-flag: this grid point is dropped
    }
  }
  if (fits.empty()) {
    if (last_error) throw *last_error;
    throw DataError("ridge calibration: no grid point could be fit");
  }

  std::size_t pick = 0;
  bool any_in_band = false;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    if (!trace[k].in_lambda_tau) continue;
    if (!any_in_band || trace[k].multiaccuracy < trace[pick].multiaccuracy) pick = k;
    any_in_band = true;
  }
  if (!any_in_band) {
    for (std::size_t k = 1; k < trace.size(); ++k) {
      if (std::abs(trace[k].loo_coverage - tau) < std::abs(trace[pick].loo_coverage - tau)) {
        pick = k;
      }
    }
  }

  CalibrationResult result = std::move(fits[pick]);
  result.method = method;
  result.lambda = trace[pick].lambda;
  result.loo_multiaccuracy = trace[pick].multiaccuracy;
  result.lambda_trace = std::move(trace);
  result.lambda_tau_empty = !any_in_band;
  return result;
}

}  // namespace

CalibrationResult calibrate_level(const Dataset& data, double tau, double lambda,
                                  const SolverConfig& config) {
  return level_search(data, tau, lambda, config, std::nullopt, nullptr);
}

CalibrationResult calibrate_level_ridge(const Dataset& data, double tau,
                                        const std::vector<double>& lambda_grid,
                                        const SolverConfig& config) {
  auto inner = [&](double lambda, std::optional<double> guess, const FitResult* warm) {
    return level_search(data, tau, lambda, config, guess, warm);
  };
  return ridge_grid(data, tau, lambda_grid, config, inner, CalibrationMethod::kLevelRidge);
}

CalibrationResult calibrate_additive(const Dataset& data, double tau, double lambda,
                                     std::pair<double, double> c_range,
                                     const SolverConfig& config) {
  return additive_search(data, tau, lambda, c_range, config, std::nullopt, nullptr);
}

CalibrationResult calibrate_additive_ridge(const Dataset& data, double tau,
                                           const std::vector<double>& lambda_grid,
                                           std::pair<double, double> c_range,
                                           const SolverConfig& config) {
  auto inner = [&](double lambda, std::optional<double> guess, const FitResult* warm) {
    return additive_search(data, tau, lambda, c_range, config, guess, warm);
  };
  return ridge_grid(data, tau, lambda_grid, config, inner,
                    CalibrationMethod::kAdditiveRidge);
}

}  // namespace qrdual
