#include "qrdual/asymptotics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>

#include "qrdual/gauss.hpp"
#include "qrdual/pinball.hpp"

namespace qrdual {

namespace {

constexpr int kQuadratureNodes = 129;
constexpr double kInnerTol = 1e-9;
constexpr double kInnerPolishTol = 1e-12;
constexpr double kOuterTol = 1e-8;
constexpr double kRho2Floor = 1e-10;
constexpr int kMaxWidenings = 3;

const GaussHermiteRule& quadrature() {
  static const GaussHermiteRule rule(kQuadratureNodes);
  return rule;
}

struct Bounds {
  double beta0, m_u, rho1, rho2, eta_lo, eta_hi;
};

Bounds resolve_bounds(const AsymptoticProblem& p) {
  Bounds b;
  b.beta0 = p.bounds.c_beta0;
  b.m_u = p.bounds.c_u;
  b.rho1 = p.bounds.c1;
  b.rho2 = p.bounds.c2;
  const double m = std::min(p.tau, 1.0 - p.tau);
  b.eta_lo = p.bounds.c_eta_lo > 0.0 ? p.bounds.c_eta_lo : 0.45 * m;
  b.eta_hi = p.bounds.c_eta_hi > 0.0 ? p.bounds.c_eta_hi : std::max(p.tau, 1.0 - p.tau);
  if (!(b.eta_lo < std::sqrt(0.5) * m)) {
    throw std::invalid_argument("asymptotics: c_eta violates the side condition");
  }
  if (!(b.eta_lo < b.eta_hi)) {
    throw std::invalid_argument("asymptotics: need c_eta < C_eta");
  }
  return b;
}

struct SaddleObjective {
  double gamma, tau, sigma, m2, lambda;

  double pinball_term(double beta0, double m_u, double rho) const {
    const double sd = std::sqrt(m_u * m_u + sigma * sigma);
    return quadrature().gaussian_expectation(
        -beta0, sd, [&](double w) { return pinball_envelope(w, rho, tau); });
  }

  double reg_term(double m_u, double m_eta, double rho2) const {
    if (lambda == 0.0) return 0.0;
    const double c = m_eta * m_u / rho2;
    const double sd = std::sqrt(c * c + gamma * gamma * m2);
    const double rho = m_u / rho2;
    const double shrink = 1.0 + 2.0 * lambda * gamma * rho;
    return gamma * quadrature().gaussian_expectation(0.0, sd, [&](double x) {
      return lambda * gamma * x * x / shrink;
    });
  }

  double operator()(double beta0, double m_u, double rho1, double m_eta,
                    double rho2) const {
    return pinball_term(beta0, m_u, rho1 / m_eta) -
           gamma * m_eta * m_eta * m_u / (2.0 * rho2) + reg_term(m_u, m_eta, rho2) +
           m_eta * rho1 / 2.0 - m_u * rho2 / 2.0;
  }

  // E[(W - prox(W; rho/m_eta))^2], the square of the rho1 first-order map.
  double clip_second_moment(double beta0, double m_u, double rho_over_meta) const {
    const double sd = std::sqrt(m_u * m_u + sigma * sigma);
    const double hi = rho_over_meta * tau;
    const double lo = -rho_over_meta * (1.0 - tau);
    return quadrature().gaussian_expectation(-beta0, sd, [&](double w) {
      const double c = std::clamp(w, lo, hi);
      return c * c;
    });
  }
};

template <typename F>
double golden_max(const F& f, double lo, double hi, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

// Inner concave maximization over (M_eta, rho2). The profile
// G(M_eta) = max_rho2 A is concave, so nested golden-section (rho2 searched
// on a log scale) finds the joint maximum without the zigzag a coordinate
// ascent suffers on the correlated (M_eta, rho2) ridge.
class InnerMaximizer {
 public:
  InnerMaximizer(const SaddleObjective& obj, const Bounds& box)
      : obj_(obj), box_(box), m_eta_(0.5 * (box.eta_lo + box.eta_hi)),
        rho2_(0.5 * box.rho2) {}

  double maximize(double beta0, double m_u, double rho1, double tol) {
    const double log_lo = std::log(kRho2Floor);
    const double log_hi = std::log(box_.rho2);
    double best_rho2 = rho2_;
    auto profile = [&](double m_eta) {
      const double lv = golden_max(
          [&](double t) { return obj_(beta0, m_u, rho1, m_eta, std::exp(t)); },
          log_lo, log_hi, std::max(tol, 1e-12));
      best_rho2 = std::exp(lv);
      return obj_(beta0, m_u, rho1, m_eta, best_rho2);
    };
    m_eta_ = golden_max(profile, box_.eta_lo, box_.eta_hi, tol);
    profile(m_eta_);
    rho2_ = best_rho2;
    return obj_(beta0, m_u, rho1, m_eta_, rho2_);
  }

  double m_eta() const { return m_eta_; }
  double rho2() const { return rho2_; }

 private:
  const SaddleObjective& obj_;
  Bounds box_;
  double m_eta_, rho2_;
};

struct OuterPoint {
  std::array<double, 3> x;  // beta0, m_u, rho1
  double value;
};

class OuterMinimizer {
 public:
  OuterMinimizer(const SaddleObjective& obj, const Bounds& box)
      : box_(box), inner_(obj, box) {}

  double evaluate(std::array<double, 3> x) {
    const std::array<double, 3> c = clamp(x);
    double penalty = 0.0;
    for (int k = 0; k < 3; ++k) penalty += (x[k] - c[k]) * (x[k] - c[k]);
    return inner_.maximize(c[0], c[1], c[2], kInnerTol) + 1e6 * penalty;
  }

  // Nelder-Mead with reflection/expansion/contraction/shrink.
  OuterPoint minimize(std::array<double, 3> start, double scale, int max_evals) {
    std::array<OuterPoint, 4> simplex;
    simplex[0] = {start, evaluate(start)};
    for (int k = 0; k < 3; ++k) {
      auto x = start;
      x[k] += scale;
      simplex[k + 1] = {x, evaluate(x)};
    }
    int evals = 4;
    while (evals < max_evals) {
      std::sort(simplex.begin(), simplex.end(),
                [](const OuterPoint& a, const OuterPoint& b) { return a.value < b.value; });
      const double spread = simplex[3].value - simplex[0].value;
      double diameter = 0.0;
      for (int k = 0; k < 3; ++k) {
        diameter = std::max(diameter, distance(simplex[0].x, simplex[k + 1].x));
      }
      if (spread < 1e-8 * (1.0 + std::abs(simplex[0].value)) && diameter < kOuterTol) break;

      std::array<double, 3> centroid{};
      for (int v = 0; v < 3; ++v) {
        for (int k = 0; k < 3; ++k) centroid[k] += simplex[v].x[k] / 3.0;
      }
      auto blend = [&](double t) {
        std::array<double, 3> x;
        for (int k = 0; k < 3; ++k) x[k] = centroid[k] + t * (centroid[k] - simplex[3].x[k]);
        return x;
      };

      const auto xr = blend(1.0);
      const double fr = evaluate(xr);
      ++evals;
      if (fr < simplex[0].value) {
        const auto xe = blend(2.0);
        const double fe = evaluate(xe);
        ++evals;
        simplex[3] = fe < fr ? OuterPoint{xe, fe} : OuterPoint{xr, fr};
      } else if (fr < simplex[2].value) {
        simplex[3] = {xr, fr};
      } else {
        const bool outside = fr < simplex[3].value;
        const auto xc = blend(outside ? 0.5 : -0.5);
        const double fc = evaluate(xc);
        ++evals;
        if (fc < std::min(fr, simplex[3].value)) {
          simplex[3] = {xc, fc};
        } else {
          for (int v = 1; v < 4; ++v) {
            for (int k = 0; k < 3; ++k) {
              simplex[v].x[k] = 0.5 * (simplex[v].x[k] + simplex[0].x[k]);
            }
            simplex[v].value = evaluate(simplex[v].x);
            evals += 1;
          }
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const OuterPoint& a, const OuterPoint& b) { return a.value < b.value; });
    OuterPoint best = simplex[0];
    best.x = clamp(best.x);
    return best;
  }

  InnerMaximizer& inner() { return inner_; }

 private:
  std::array<double, 3> clamp(std::array<double, 3> x) const {
    x[0] = std::clamp(x[0], -box_.beta0, box_.beta0);
    x[1] = std::clamp(x[1], 0.0, box_.m_u);
    x[2] = std::clamp(x[2], 0.0, box_.rho1);
    return x;
  }
  static double distance(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  }

  Bounds box_;
  InnerMaximizer inner_;
};

// rho1 satisfying rho1^2 = E[(W - prox(W; rho1/m_eta))^2] at fixed m_eta,
// by bracketing + bisection around the current value.
double solve_rho1_fixed_point(const SaddleObjective& obj, double beta0, double m_u,
                              double m_eta, double rho1_init, double rho1_cap) {
  auto residual = [&](double rho1) {
    return rho1 * rho1 - obj.clip_second_moment(beta0, m_u, rho1 / m_eta);
  };
  double lo = std::max(rho1_init, 1e-8);
  double hi = lo;
  // f is negative below the positive root and positive above it.
  int guard = 0;
  while (residual(lo) > 0.0 && lo > 1e-14 && ++guard < 200) lo *= 0.5;
  guard = 0;
  while (residual(hi) < 0.0 && hi < rho1_cap && ++guard < 200) hi *= 2.0;
  hi = std::min(hi, rho1_cap);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Cyclic coordinate descent with adaptive golden-section brackets. F is
// smooth and convex in (beta0, m_u, rho1), so coordinate-wise optimality is
// global optimality; this cleans up whatever basin Nelder-Mead lands in.
OuterPoint coordinate_polish(OuterMinimizer& outer, const Bounds& box, OuterPoint start,
                             int max_sweeps) {
  std::array<double, 3> lo{-box.beta0, 0.0, 0.0};
  std::array<double, 3> hi{box.beta0, box.m_u, box.rho1};
  OuterPoint cur = start;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double move = 0.0;
    for (int k = 0; k < 3; ++k) {
      double w = std::max(0.25 * std::abs(cur.x[k]), 0.05);
      double a = std::max(lo[k], cur.x[k] - w);
      double b = std::min(hi[k], cur.x[k] + w);
      auto line = [&](double v) {
        auto x = cur.x;
        x[k] = v;
        return -outer.evaluate(x);  // golden_max maximizes
      };
      double v = golden_max(line, a, b, 1e-10);
      // Expand while the optimum pins a bracket edge that is not a box edge.
      int guard = 0;
      while (guard++ < 30) {
        const bool at_lo = v - a < 2e-10 && a > lo[k] + 1e-14;
        const bool at_hi = b - v < 2e-10 && b < hi[k] - 1e-14;
        if (!at_lo && !at_hi) break;
        w *= 4.0;
        a = std::max(lo[k], cur.x[k] - w);
        b = std::min(hi[k], cur.x[k] + w);
        v = golden_max(line, a, b, 1e-10);
      }
      move = std::max(move, std::abs(v - cur.x[k]));
      cur.x[k] = v;
    }
    if (move < 1e-9) break;
  }
  cur.value = outer.evaluate(cur.x);
  return cur;
}

}  // namespace

double asymptotic_objective(const AsymptoticProblem& problem, double beta0, double m_u,
                            double rho1, double m_eta, double rho2) {
  problem.validate();
  if (!(m_eta > 0.0) || !(rho2 > 0.0)) {
    throw std::invalid_argument("asymptotic_objective: m_eta and rho2 must be > 0");
  }
  SaddleObjective obj{problem.gamma, problem.tau, problem.sigma_eps,
                      problem.beta_second_moment, problem.lambda_scaled};
  return obj(beta0, m_u, rho1, m_eta, rho2);
}

AsymptoticSolution solve_asymptotic(const AsymptoticProblem& problem) {
  problem.validate();
  SaddleObjective obj{problem.gamma, problem.tau, problem.sigma_eps,
                      problem.beta_second_moment, problem.lambda_scaled};

  AsymptoticProblem working = problem;
  for (int round = 0; round <= kMaxWidenings; ++round) {
    const Bounds box = resolve_bounds(working);
    OuterMinimizer outer(obj, box);

    // Classical-regime heuristics for the start point.
    std::array<double, 3> start{problem.sigma_eps * normal_quantile(problem.tau),
                                std::sqrt(problem.gamma),
                                std::sqrt(problem.gamma) * problem.sigma_eps};
    OuterPoint best = outer.minimize(start, 0.25, 900);
    best = coordinate_polish(outer, box, best, 60);

    double beta0 = best.x[0], m_u = best.x[1], rho1 = best.x[2];

    // Polish the (rho1, M_eta, rho2) block at the solved (beta0, M_u): the
    // alternation drives the rho1 first-order condition to quadrature
    // precision.
    InnerMaximizer polish(obj, box);
    if (m_u >= 1e-4) {
      for (int it = 0; it < 60; ++it) {
        polish.maximize(beta0, m_u, rho1, kInnerPolishTol);
        const double next =
            solve_rho1_fixed_point(obj, beta0, m_u, polish.m_eta(), rho1, box.rho1);
        const double move = std::abs(next - rho1);
        rho1 = next;
        if (move < 1e-12) break;
      }
    }
    polish.maximize(beta0, m_u, rho1, kInnerPolishTol);

    // Widen any pinned outer box edge and re-solve.
    const double edge_tol = 1e-3;
    bool pinned = std::abs(beta0) > (1.0 - edge_tol) * box.beta0 ||
                  m_u > (1.0 - edge_tol) * box.m_u || rho1 > (1.0 - edge_tol) * box.rho1 ||
                  polish.rho2() > (1.0 - edge_tol) * box.rho2;
    if (pinned && round < kMaxWidenings) {
      working.bounds.c_beta0 *= 2.0;
      working.bounds.c_u *= 2.0;
      working.bounds.c1 *= 2.0;
      working.bounds.c2 *= 2.0;
      continue;
    }

    AsymptoticSolution sol;
    sol.beta0_star = beta0;
    sol.m_u_star = m_u;
    sol.rho1_star = rho1;
    sol.m_eta_star = polish.m_eta();
    sol.rho2_star = polish.rho2();
    sol.objective_value = obj(beta0, m_u, rho1, polish.m_eta(), polish.rho2());
    sol.degenerate = m_u < 1e-4;
    sol.converged = true;
    sol.widenings = round;
    const double varsigma =
        std::sqrt(m_u * m_u + problem.sigma_eps * problem.sigma_eps);
    sol.predicted_coverage = normal_cdf(beta0 / varsigma);
    return sol;
  }

  std::ostringstream msg;
  msg << "solve_asymptotic: box widening did not stabilize after " << kMaxWidenings
      << " rounds (gamma=" << problem.gamma << ", tau=" << problem.tau << ")";
  throw std::runtime_error(msg.str());
}

LimitingDualLaw::LimitingDualLaw(const AsymptoticSolution& solution,
                                 const AsymptoticProblem& problem) {
  problem.validate();
  if (!solution.converged) {
    throw std::invalid_argument("limiting_dual_law: solution did not converge");
  }
  tau_ = problem.tau;
  degenerate_ = solution.degenerate;
  if (degenerate_) {
    // Two-point law with p = P(eps - beta0* < 0).
    mass_lower_ = normal_cdf(solution.beta0_star / problem.sigma_eps);
    mass_upper_ = 1.0 - mass_lower_;
    return;
  }
  rho_tilde_ = solution.rho1_star / solution.m_eta_star;
  w_mean_ = -solution.beta0_star;
  w_sd_ = std::sqrt(solution.m_u_star * solution.m_u_star +
                    problem.sigma_eps * problem.sigma_eps);
  mass_lower_ = normal_cdf((-rho_tilde_ * (1.0 - tau_) - w_mean_) / w_sd_);
  mass_upper_ = 1.0 - normal_cdf((rho_tilde_ * tau_ - w_mean_) / w_sd_);
}

double LimitingDualLaw::cdf(double z) const {
  if (z < lower_edge()) return 0.0;
  if (z >= upper_edge()) return 1.0;
  if (degenerate_) return mass_lower_;
  return normal_cdf((z * rho_tilde_ - w_mean_) / w_sd_);
}

double LimitingDualLaw::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) {
    throw std::invalid_argument("LimitingDualLaw::quantile: q must be in (0,1)");
  }
  if (degenerate_) return q <= mass_lower_ ? lower_edge() : upper_edge();
  const double z = (w_mean_ + w_sd_ * normal_quantile(q)) / rho_tilde_;
  return std::clamp(z, lower_edge(), upper_edge());
}

double LimitingDualLaw::prob_nonpositive() const {
  if (degenerate_) return mass_lower_;
  return normal_cdf(-w_mean_ / w_sd_);
}

double LimitingDualLaw::density_interior(double z) const {
  if (degenerate_ || z <= lower_edge() || z >= upper_edge()) return 0.0;
  return normal_pdf((z * rho_tilde_ - w_mean_) / w_sd_) * rho_tilde_ / w_sd_;
}

double LimitingDualLaw::sample(RandomStream& rng) const {
  if (degenerate_) return rng.uniform() <= mass_lower_ ? lower_edge() : upper_edge();
  const double w = w_mean_ + w_sd_ * rng.normal();
  const double clipped =
      std::clamp(w, -rho_tilde_ * (1.0 - tau_), rho_tilde_ * tau_);
  return clipped / rho_tilde_;
}

LimitingDualLaw limiting_dual_law(const AsymptoticSolution& solution,
                                  const AsymptoticProblem& problem) {
  return LimitingDualLaw(solution, problem);
}

std::pair<double, double> predicted_primal_limits(const AsymptoticSolution& solution) {
  return {solution.beta0_star, solution.m_u_star};
}

}  // namespace qrdual
