#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qrdual/dataset.hpp"
#include "qrdual/solver.hpp"

namespace qrdual {

enum class IntervalMethod { kQr, kCqr, kGccRand, kFixedThresh, kLevelRidge, kAdditiveRidge };

struct IntervalReport {
  double coverage = 0.0;
  double median_length = 0.0;
  double multiaccuracy = 0.0;
  std::vector<bool> per_point_covered;
};

struct IntervalOptions {
  std::vector<double> lambda_grid;            // empty: figure-caption default
  std::pair<double, double> c_range{-10.0, 10.0};
  double split_fraction = 0.75;               // CQR proper-training share
  std::uint64_t seed = 0;                     // randomized-GCC cutoffs
};

using IntervalList = std::vector<std::pair<double, double>>;

/// Two-sided intervals: each side is fit/calibrated independently at levels
/// alpha/2 and 1-alpha/2 and evaluated on the rows of x_test.
IntervalList interval_predict(IntervalMethod method, const Dataset& data, double alpha,
                              const SolverConfig& config, const Matrix& x_test,
                              const IntervalOptions& options = {});

/// Split-CQR: quantile regression on the first split_fraction of the rows,
/// conformity scores max{q_lo - y, y - q_hi} on the rest, both bounds
/// inflated by the ceil((1-alpha)(n2+1))-th smallest score.
IntervalList cqr_predict(const Dataset& data, double alpha, double split_fraction,
                         const SolverConfig& config, const Matrix& x_test);

/// Coverage, clipped median length max{upper-lower, 0}, and coordinatewise
/// multiaccuracy max_j |mean(X_j (covered - (1-alpha)))| / mean|X_j| over the
/// test rows. Zero-denominator columns are skipped.
IntervalReport evaluate(const IntervalList& intervals, const Vector& y_test,
                        const Matrix& x_test, double alpha);

}  // namespace qrdual
