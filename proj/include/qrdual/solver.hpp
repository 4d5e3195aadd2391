#pragma once

#include <Eigen/Core>
#include <limits>
#include <memory>
#include <stdexcept>

#include "qrdual/dataset.hpp"

namespace qrdual {

enum class InterceptMode { kFree, kFixedOffset };

/// Regression problem: sum_i l_tau(y_i - offset - x_i'beta) + lambda*||beta||^2,
/// with either a free intercept or a fixed offset c. jitter > 0 perturbs the
/// design and response by that much i.i.d. noise before fitting (the optional
/// tie-breaking device; off by default).
struct ProblemSpec {
  double tau = 0.5;
  double lambda = 0.0;
  InterceptMode intercept_mode = InterceptMode::kFree;
  double offset = 0.0;  // used when intercept_mode == kFixedOffset
  double jitter = 0.0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("spec: tau must be in (0,1)");
    if (!(lambda >= 0.0)) throw std::invalid_argument("spec: lambda must be >= 0");
    if (!(jitter >= 0.0)) throw std::invalid_argument("spec: jitter must be >= 0");
  }
};

/// Interior-dual tie tolerance: duals within this of a box edge (or of zero,
/// for coverage classification) count as ties.
inline constexpr double kKktEps = 1e-6;

struct KktCertificate {
  // max_i |(y_eff - A theta)_i - r_i|: violation of the splitting constraint.
  double primal_residual = std::numeric_limits<double>::infinity();
  // ADMM dual residual at the last accepted iterate.
  double dual_residual = std::numeric_limits<double>::infinity();
  // (1/n) sum_i [ l_tau(r_i) - eta_i r_i ] on the exact residuals; this is the
  // complementary-slackness total and equals the duality gap per sample once
  // stationarity holds. May be tiny-negative within box tolerance.
  double duality_gap_per_sample = std::numeric_limits<double>::infinity();
  // max(|X'eta - 2 lambda beta|_inf, |1'eta| when the intercept is free).
  double stationarity_norm = std::numeric_limits<double>::infinity();
  // max_i dist(eta_i, [-(1-tau), tau]); zero by construction for ADMM duals.
  double box_violation = 0.0;

  // Scales the residuals are measured against.
  double response_scale = 1.0;
  double design_scale = 1.0;

  bool rank_deficient = false;
  bool converged = false;

  bool within(double tol) const {
    return primal_residual <= tol * response_scale &&
           stationarity_norm <= tol * design_scale * std::max(1.0, response_scale) &&
           duality_gap_per_sample <= tol * std::max(1.0, response_scale) &&
           box_violation <= tol;
  }
};

struct FitResult {
  double intercept_or_offset = 0.0;
  Vector beta;
  Vector residuals;  // exact: y - offset - X beta
  Vector duals;      // eta in [-(1-tau), tau]^n
  KktCertificate kkt;
  double objective = 0.0;
  int iterations = 0;

  // Echo of the problem, handy downstream.
  double tau = 0.5;
  double lambda = 0.0;
  InterceptMode intercept_mode = InterceptMode::kFree;

  double predict(const Eigen::Ref<const Vector>& x) const {
    return intercept_or_offset + (beta.size() > 0 ? x.dot(beta) : 0.0);
  }
};

struct SolverConfig {
  int max_iterations = 50000;
  double tolerance = 1e-9;
  double admm_rho = 1.0;      // initial penalty, rescaled adaptively
  double relaxation = 1.2;    // mild over-relaxation
  // Retry with conservative parameters (no relaxation, cold start, smaller
  // penalty) before reporting non-convergence.
  bool retry_on_stall = true;
  const FitResult* warm_start = nullptr;

  void validate() const {
    if (max_iterations < 1) throw std::invalid_argument("config: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("config: tolerance must be > 0");
    if (!(admm_rho > 0.0)) throw std::invalid_argument("config: admm_rho must be > 0");
  }
};

/// Non-convergence within max_iterations. Carries the best iterate seen.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, FitResult best)
      : std::runtime_error(what), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

FitResult fit(const Dataset& data, const ProblemSpec& spec, const SolverConfig& config);

/// Fit on the n+1 points (data, (x_new, y_guess)); duals have n+1 entries and
/// the last one obeys the first-order trichotomy in y_guess.
FitResult fit_augmented(const Dataset& data, const ProblemSpec& spec,
                        const SolverConfig& config, const Eigen::Ref<const Vector>& x_new,
                        double y_guess);

/// Reusable solver bound to one design matrix. Caches the Gram matrix (and
/// per-penalty factorizations) so repeated fits across tau/lambda/offset/y
/// probes cost only the ADMM iterations. Augmented engines share the parent's
/// Gram through a rank-one update.
class FitEngine {
 public:
  FitEngine(Matrix features, Vector response);
  FitEngine(const FitEngine&);
  FitEngine& operator=(const FitEngine&) = delete;
  ~FitEngine();

  static FitEngine augmented(const FitEngine& base, const Eigen::Ref<const Vector>& x_new,
                             double y_init = 0.0);

  /// Replaces the response of the last row (the imputed label of an augmented
  /// engine). Invalidates nothing else.
  void set_last_response(double y);

  FitResult solve(const ProblemSpec& spec, const SolverConfig& config) const;

  const Matrix& features() const;
  const Vector& response() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qrdual
