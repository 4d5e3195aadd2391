#pragma once

#include <vector>

#include "qrdual/dataset.hpp"
#include "qrdual/solver.hpp"

namespace qrdual {

/// Dual sign within this of zero counts as a tie.
inline constexpr double kSignEps = 1e-6;

struct LooSummary {
  double coverage = 0.0;
  int tie_count = 0;
  std::vector<bool> per_sample_covered;
};

/// Leave-one-out coverage read off the dual signs of a single fit:
/// sample i is covered iff eta_i <= 0 (within kSignEps). O(n), no refits.
LooSummary loo_coverage_dual(const FitResult& fit);

/// The n-refit oracle: drops each sample, refits, and checks
/// y_i <= fitted value. Ties (|y_i - fitted| within 1e-9 * response scale)
/// are counted. Warm-started from the full fit.
LooSummary loo_coverage_bruteforce(const Dataset& data, const ProblemSpec& spec,
                                   const SolverConfig& config);

/// Coordinatewise leave-one-out multiaccuracy error,
///   max_j |mean(X_j * (covered - tau))| / mean(|X_j|),
/// with covered taken from the dual signs. Columns whose absolute mean is
/// zero are skipped; all-zero designs raise DataError.
double loo_multiaccuracy(const FitResult& fit, const Dataset& data, double tau);

}  // namespace qrdual
