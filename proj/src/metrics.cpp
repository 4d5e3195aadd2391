#include "qrdual/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qrdual/calibrate.hpp"
#include "qrdual/conformal.hpp"
#include "qrdual/errors.hpp"
#include "qrdual/rng.hpp"

namespace qrdual {

namespace {

Vector side_predictions_plain(const FitResult& fit_result, const Matrix& x_test) {
  Vector out(x_test.rows());
  for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
    out(i) = fit_result.predict(x_test.row(i).transpose());
  }
  return out;
}

// One side (level tau) for the methods that reduce to a single fitted model.
Vector side_predictions(IntervalMethod method, const Dataset& data, double tau,
                        const SolverConfig& config, const Matrix& x_test,
                        const IntervalOptions& options, std::uint64_t side_seed) {
  const std::vector<double> grid = options.lambda_grid.empty()
                                       ? default_lambda_grid(data.n_samples())
                                       : options.lambda_grid;
  switch (method) {
    case IntervalMethod::kQr: {
      ProblemSpec spec;
      spec.tau = tau;
      return side_predictions_plain(fit(data, spec, config), x_test);
    }
    case IntervalMethod::kLevelRidge: {
      const CalibrationResult cal = calibrate_level_ridge(data, tau, grid, config);
      return side_predictions_plain(cal.final_fit, x_test);
    }
    case IntervalMethod::kAdditiveRidge: {
      const CalibrationResult cal =
          calibrate_additive_ridge(data, tau, grid, options.c_range, config);
      return side_predictions_plain(cal.final_fit, x_test);
    }
    case IntervalMethod::kFixedThresh: {
      ProblemSpec spec;
      spec.tau = tau;
      ConformalScorer scorer(data, spec, config);
      Vector out(x_test.rows());
      for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
        out(i) = scorer.predict_fixed(x_test.row(i).transpose()).as_double();
      }
      return out;
    }
    case IntervalMethod::kGccRand: {
      ProblemSpec spec;
      spec.tau = tau;
      ConformalScorer scorer(data, spec, config);
      RandomStream rng(derive_seed(options.seed, side_seed));
      Vector out(x_test.rows());
      for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
        const double u = rng.uniform(-(1.0 - tau), tau);
        out(i) = scorer.predict_at_threshold(x_test.row(i).transpose(), u).as_double();
      }
      return out;
    }
    case IntervalMethod::kCqr:
      throw std::invalid_argument("side_predictions: CQR is handled as a whole interval");
  }
  throw std::invalid_argument("side_predictions: unknown method");
}

}  // namespace

IntervalList interval_predict(IntervalMethod method, const Dataset& data, double alpha,
                              const SolverConfig& config, const Matrix& x_test,
                              const IntervalOptions& options) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("interval_predict: alpha must be in (0,1)");
  }
  if (x_test.cols() != data.n_features()) {
    throw DataError("interval_predict: test feature dimension mismatch");
  }
  if (method == IntervalMethod::kCqr) {
    return cqr_predict(data, alpha, options.split_fraction, config, x_test);
  }
  const Vector lower =
      side_predictions(method, data, alpha / 2.0, config, x_test, options, 0x10);
  const Vector upper =
      side_predictions(method, data, 1.0 - alpha / 2.0, config, x_test, options, 0x11);
  IntervalList out(x_test.rows());
  for (Eigen::Index i = 0; i < x_test.rows(); ++i) out[i] = {lower(i), upper(i)};
  return out;
}

IntervalList cqr_predict(const Dataset& data, double alpha, double split_fraction,
                         const SolverConfig& config, const Matrix& x_test) {
  data.validate();
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
    throw std::invalid_argument("cqr_predict: split_fraction must be in (0,1)");
  }
  const Eigen::Index n = data.n_samples();
  const auto n1 = static_cast<Eigen::Index>(std::floor(split_fraction * n));
  const Eigen::Index n2 = n - n1;
  if (n1 < 1 || n2 < 1) throw DataError("cqr_predict: calibration fold is empty");

  Dataset train = make_dataset(data.features.topRows(n1), data.response.head(n1));
  ProblemSpec lo_spec, hi_spec;
  lo_spec.tau = alpha / 2.0;
  hi_spec.tau = 1.0 - alpha / 2.0;
  const FitResult fit_lo = fit(train, lo_spec, config);
  const FitResult fit_hi = fit(train, hi_spec, config);

  std::vector<double> scores(n2);
  for (Eigen::Index i = 0; i < n2; ++i) {
    const Vector x = data.features.row(n1 + i).transpose();
    const double y = data.response(n1 + i);
    scores[i] = std::max(fit_lo.predict(x) - y, y - fit_hi.predict(x));
  }
  const auto k = static_cast<Eigen::Index>(
      std::ceil((1.0 - alpha) * (static_cast<double>(n2) + 1.0) - 1e-12));
  double inflation;
  if (k > n2) {
    inflation = std::numeric_limits<double>::infinity();
  } else {
    std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
    inflation = scores[k - 1];
  }

  IntervalList out(x_test.rows());
  for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
    const Vector x = x_test.row(i).transpose();
    out[i] = {fit_lo.predict(x) - inflation, fit_hi.predict(x) + inflation};
  }
  return out;
}

IntervalReport evaluate(const IntervalList& intervals, const Vector& y_test,
                        const Matrix& x_test, double alpha) {
  const auto n = static_cast<Eigen::Index>(intervals.size());
  if (n != y_test.size() || n != x_test.rows()) {
    throw DataError("evaluate: length mismatch between intervals and test data");
  }
  if (n < 1) throw DataError("evaluate: empty test set");

  IntervalReport report;
  report.per_point_covered.resize(n);
  std::vector<double> widths(n);
  Vector centered(n);
  int covered_count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [lo, hi] = intervals[i];
    const bool covered = lo <= y_test(i) && y_test(i) <= hi;
    report.per_point_covered[i] = covered;
    covered_count += covered ? 1 : 0;
    widths[i] = std::max(hi - lo, 0.0);
    centered(i) = (covered ? 1.0 : 0.0) - (1.0 - alpha);
  }
  report.coverage = static_cast<double>(covered_count) / static_cast<double>(n);

  std::sort(widths.begin(), widths.end());
  report.median_length = n % 2 == 1 ? widths[n / 2]
                                    : 0.5 * (widths[n / 2 - 1] + widths[n / 2]);

  double worst = -1.0;
  for (Eigen::Index j = 0; j < x_test.cols(); ++j) {
    const double denom = x_test.col(j).cwiseAbs().mean();
    if (denom == 0.0) continue;
    const double num = std::abs(x_test.col(j).dot(centered)) / static_cast<double>(n);
    worst = std::max(worst, num / denom);
  }
  if (x_test.cols() > 0 && worst < 0.0) {
    throw DataError("evaluate: all feature columns are zero");
  }
  report.multiaccuracy = std::max(worst, 0.0);
  return report;
}

}  // namespace qrdual
