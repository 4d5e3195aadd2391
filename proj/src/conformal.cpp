#include "qrdual/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>

#include "qrdual/errors.hpp"
#include "qrdual/quantile.hpp"

namespace qrdual {

namespace {
constexpr int kMaxDoublings = 60;
constexpr double kEdgeEps = 1e-12;
}  // namespace

struct ConformalScorer::Impl {
  ProblemSpec spec;
  SolverConfig config;
  FitEngine base;
  FitResult train_fit;
  double t_hat = 0.0;
  double y_scale = 1.0;

  std::optional<FitEngine> aug;
  Vector aug_x;
  // Two warm-start slots so bisection probes on either side of a dual-path
  // jump warm-start from a nearby state instead of the opposite bracket end.
  struct WarmSlot {
    bool has = false;
    double y = 0.0;
    FitResult fit;
  };
  WarmSlot warm_slots[2];
  KktCertificate last_cert;

  Impl(const Dataset& data, const ProblemSpec& spec_in, const SolverConfig& config_in)
      : spec(spec_in), config(config_in), base(data.features, data.response) {
    data.validate();
    spec.validate();
    SolverConfig cfg = config;
    cfg.warm_start = nullptr;
    train_fit = base.solve(spec, cfg);
    t_hat = empirical_quantile(spec.tau, train_fit.duals);
    y_scale = data.response_scale_hint();
    last_cert = train_fit.kkt;
  }

  void ensure_augmented(const Eigen::Ref<const Vector>& x_new) {
    if (aug && aug_x.size() == x_new.size() && aug_x == x_new) return;
    aug.emplace(FitEngine::augmented(base, x_new));
    aug_x = x_new;
    warm_slots[0].has = false;
    warm_slots[1].has = false;
  }

  // strict mode: full iteration budget, best-effort acceptance only at 100x
  // tolerance (single-label queries; a random label never sits on a path
  // jump). Bisection probes converge onto a jump by construction, where the
  // vertex is degenerate and ADMM stalls, so they run with a capped budget
  // and a looser acceptance: the probe only feeds a threshold comparison.
  const FitResult& solve_probe(const Eigen::Ref<const Vector>& x_new, double y,
                               bool strict) {
    ensure_augmented(x_new);
    aug->set_last_response(y);
    SolverConfig cfg = config;
    cfg.warm_start = &train_fit;
    if (!strict) {
      cfg.max_iterations = std::min(cfg.max_iterations, 4000);
      cfg.retry_on_stall = false;
    }
    double best_dist = std::numeric_limits<double>::infinity();
    for (const WarmSlot& slot : warm_slots) {
      if (slot.has && std::abs(slot.y - y) < best_dist) {
        best_dist = std::abs(slot.y - y);
        cfg.warm_start = &slot.fit;
      }
    }
    FitResult result;
    try {
      result = aug->solve(spec, cfg);
    } catch (const SolverError& e) {
      const double accept = strict ? 100.0 * config.tolerance : 1e4 * config.tolerance;
      if (!e.best().kkt.within(accept)) throw;
      result = e.best();
    }
    last_cert = result.kkt;
    // Replace the nearer slot so the pair stays spread across the bracket.
    WarmSlot* target = &warm_slots[0];
    if (warm_slots[0].has && warm_slots[1].has) {
      target = std::abs(warm_slots[0].y - y) <= std::abs(warm_slots[1].y - y)
                   ? &warm_slots[0]
                   : &warm_slots[1];
    } else if (warm_slots[0].has) {
      target = &warm_slots[1];
    }
    target->has = true;
    target->y = y;
    target->fit = result;
    return target->fit;
  }

  double dual_at(const Eigen::Ref<const Vector>& x_new, double y, bool strict) {
    const FitResult& fr = solve_probe(x_new, y, strict);
    return fr.duals(fr.duals.size() - 1);
  }

  double fitted_at(const Eigen::Ref<const Vector>& x_new, double y) {
    return solve_probe(x_new, y, false).predict(x_new);
  }

  // Bisection of a nondecreasing-in-y indicator `above(y)`; returns the
  // boundary sup{y : !above(y)} to tol_y. The initial bracket is centered at
  // the plain fit's prediction and doubled until it straddles the boundary.
  ThresholdPrediction bisect_boundary(const Eigen::Ref<const Vector>& x_new,
                                      const std::function<bool(double)>& above,
                                      int* fit_counter) {
    const double center = train_fit.predict(x_new);
    const double tol_y = 1e-6 * y_scale;
    double w = 10.0 * y_scale;

    double y_lo = center - w;
    int doublings = 0;
    while (above(y_lo)) {
      if (++doublings > kMaxDoublings) {
        throw SolverError("dual-threshold bracket expansion failed (lower side)", train_fit);
      }
      w *= 2.0;
      y_lo = center - w;
    }
    double w_hi = 10.0 * y_scale;
    double y_hi = center + w_hi;
    doublings = 0;
    while (!above(y_hi)) {
      if (++doublings > kMaxDoublings) {
        throw SolverError("dual-threshold bracket expansion failed (upper side)", train_fit);
      }
      w_hi *= 2.0;
      y_hi = center + w_hi;
    }

    while (y_hi - y_lo > tol_y) {
      const double mid = 0.5 * (y_lo + y_hi);
      (above(mid) ? y_hi : y_lo) = mid;
    }
    ThresholdPrediction out;
    out.value = 0.5 * (y_lo + y_hi);
    out.fits_used = fit_counter != nullptr ? *fit_counter : 0;
    return out;
  }

  ThresholdPrediction predict_at_threshold(const Eigen::Ref<const Vector>& x_new, double t) {
    const double tau = spec.tau;
    ThresholdPrediction out;
    if (t >= tau - kEdgeEps) {
      out.plus_inf = true;  // the dual never exceeds tau
      return out;
    }
    if (t < -(1.0 - tau) - kEdgeEps) {
      out.minus_inf = true;
      return out;
    }
    int fits = 0;
    auto above = [&](double y) {
      ++fits;
      return dual_at(x_new, y, false) > t;
    };
    return bisect_boundary(x_new, above, &fits);
  }

  ThresholdPrediction predict_full_conformal(const Eigen::Ref<const Vector>& x_new) {
    int fits = 0;
    auto above = [&](double y) {
      ++fits;
      return y > fitted_at(x_new, y);
    };
    return bisect_boundary(x_new, above, &fits);
  }
};

ConformalScorer::ConformalScorer(const Dataset& data, const ProblemSpec& spec,
                                 const SolverConfig& config)
    : impl_(std::make_unique<Impl>(data, spec, config)) {}

ConformalScorer::~ConformalScorer() = default;

const FitResult& ConformalScorer::train_fit() const { return impl_->train_fit; }
double ConformalScorer::threshold_hat() const { return impl_->t_hat; }

double ConformalScorer::dual_at(const Eigen::Ref<const Vector>& x_new, double y) {
  return impl_->dual_at(x_new, y, true);
}

ThresholdPrediction ConformalScorer::predict_at_threshold(
    const Eigen::Ref<const Vector>& x_new, double t) {
  return impl_->predict_at_threshold(x_new, t);
}

ThresholdPrediction ConformalScorer::predict_fixed(const Eigen::Ref<const Vector>& x_new) {
  return impl_->predict_at_threshold(x_new, impl_->t_hat);
}

ThresholdPrediction ConformalScorer::predict_full_conformal(
    const Eigen::Ref<const Vector>& x_new) {
  return impl_->predict_full_conformal(x_new);
}

const KktCertificate& ConformalScorer::last_certificate() const { return impl_->last_cert; }

double dual_at(const Dataset& data, const ProblemSpec& spec, const SolverConfig& config,
               const Eigen::Ref<const Vector>& x_new, double y) {
  ConformalScorer scorer(data, spec, config);
  return scorer.dual_at(x_new, y);
}

ThresholdPrediction quantile_dual_threshold(const Dataset& data, const ProblemSpec& spec,
                                            const SolverConfig& config,
                                            const Eigen::Ref<const Vector>& x_new, double t) {
  ConformalScorer scorer(data, spec, config);
  return scorer.predict_at_threshold(x_new, t);
}

ThresholdPrediction fixed_threshold_predict(const Dataset& data, const ProblemSpec& spec,
                                            const SolverConfig& config,
                                            const Eigen::Ref<const Vector>& x_new) {
  ConformalScorer scorer(data, spec, config);
  return scorer.predict_fixed(x_new);
}

ThresholdPrediction randomized_gcc_predict(const Dataset& data, const ProblemSpec& spec,
                                           const SolverConfig& config,
                                           const Eigen::Ref<const Vector>& x_new, double u) {
  if (!(u > -(1.0 - spec.tau) && u < spec.tau)) {
    throw std::invalid_argument("randomized_gcc_predict: u must be in (-(1-tau), tau)");
  }
  ConformalScorer scorer(data, spec, config);
  return scorer.predict_at_threshold(x_new, u);
}

ThresholdPrediction full_conformal_predict(const Dataset& data, const ProblemSpec& spec,
                                           const SolverConfig& config,
                                           const Eigen::Ref<const Vector>& x_new) {
  ConformalScorer scorer(data, spec, config);
  return scorer.predict_full_conformal(x_new);
}

}  // namespace qrdual
