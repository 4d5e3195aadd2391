#pragma once

#include <limits>
#include <memory>

#include "qrdual/dataset.hpp"
#include "qrdual/solver.hpp"

namespace qrdual {

/// One resolved dual-path query: bisection bracket and tolerance for
/// sup{y : eta_{n+1}(y) <= threshold}.
struct DualPathQuery {
  Vector x_new;
  double threshold = 0.0;
  double y_lo = 0.0;
  double y_hi = 0.0;
  double tol_y = 1e-6;
};

/// Prediction with explicit infinity sentinels (threshold at or beyond a box
/// edge) instead of silent special values.
struct ThresholdPrediction {
  double value = 0.0;
  bool plus_inf = false;
  bool minus_inf = false;
  int fits_used = 0;

  double as_double() const {
    if (plus_inf) return std::numeric_limits<double>::infinity();
    if (minus_inf) return -std::numeric_limits<double>::infinity();
    return value;
  }
};

/// eta_{n+1} of the augmented fit at imputed label y.
double dual_at(const Dataset& data, const ProblemSpec& spec, const SolverConfig& config,
               const Eigen::Ref<const Vector>& x_new, double y);

/// sup{y : eta_{n+1}(y) <= t} by bisection over the monotone dual path.
/// t >= tau gives the +inf sentinel, t < -(1-tau) the -inf sentinel.
ThresholdPrediction quantile_dual_threshold(const Dataset& data, const ProblemSpec& spec,
                                            const SolverConfig& config,
                                            const Eigen::Ref<const Vector>& x_new, double t);

/// Dual thresholding at t_hat = empirical tau-quantile of the training duals.
ThresholdPrediction fixed_threshold_predict(const Dataset& data, const ProblemSpec& spec,
                                            const SolverConfig& config,
                                            const Eigen::Ref<const Vector>& x_new);

/// Dual thresholding at a caller-supplied u ~ Unif(-(1-tau), tau).
ThresholdPrediction randomized_gcc_predict(const Dataset& data, const ProblemSpec& spec,
                                           const SolverConfig& config,
                                           const Eigen::Ref<const Vector>& x_new, double u);

/// Conservative full-conformal cutoff sup{y : y <= fitted_y(x_new)}.
ThresholdPrediction full_conformal_predict(const Dataset& data, const ProblemSpec& spec,
                                           const SolverConfig& config,
                                           const Eigen::Ref<const Vector>& x_new);

/// Shared machinery for many predictions against one training set: holds the
/// training fit, its dual quantile t_hat, and warm-start state. Predictions
/// for distinct test points may run on distinct Scorer copies in parallel;
/// one Scorer is not thread-safe.
class ConformalScorer {
 public:
  ConformalScorer(const Dataset& data, const ProblemSpec& spec, const SolverConfig& config);
  ~ConformalScorer();
  ConformalScorer(const ConformalScorer&) = delete;
  ConformalScorer& operator=(const ConformalScorer&) = delete;

  const FitResult& train_fit() const;
  double threshold_hat() const;

  /// One augmented fit; returns eta_{n+1}. Exposes the fit's certificate via
  /// last_certificate() for callers that track solver quality.
  double dual_at(const Eigen::Ref<const Vector>& x_new, double y);

  ThresholdPrediction predict_at_threshold(const Eigen::Ref<const Vector>& x_new, double t);
  ThresholdPrediction predict_fixed(const Eigen::Ref<const Vector>& x_new);
  ThresholdPrediction predict_full_conformal(const Eigen::Ref<const Vector>& x_new);

  const KktCertificate& last_certificate() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qrdual
