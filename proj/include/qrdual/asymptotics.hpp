#pragma once

#include <cmath>
#include <stdexcept>

#include "qrdual/rng.hpp"

namespace qrdual {

/// Box constants for the saddle program. Defaults satisfy the side condition
/// c_eta < sqrt(min{tau^2,(1-tau)^2}/2); they are widened automatically when
/// a solution pins an edge.
struct AsymptoticBounds {
  double c_beta0 = 20.0;
  double c_u = 20.0;
  double c1 = 50.0;
  double c2 = 50.0;
  double c_eta_lo = 0.0;  // 0 means: derive 0.45*min(tau, 1-tau)
  double c_eta_hi = 0.0;  // 0 means: derive max(tau, 1-tau)
};

/// Gaussian-design, Gaussian-coefficient instance of the deterministic
/// saddle program. lambda_scaled is the lambda of the dimension-scaled ridge
/// d*lambda*||beta||^2; beta_second_moment is E[(sqrt(d) beta_1)^2].
struct AsymptoticProblem {
  double gamma = 0.2;          // in (0, 2/pi)
  double tau = 0.9;
  double sigma_eps = 1.0;
  double beta_second_moment = 1.0;
  double lambda_scaled = 0.0;
  AsymptoticBounds bounds;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 2.0 / M_PI)) {
      throw std::invalid_argument("asymptotics: gamma must be in (0, 2/pi)");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("asymptotics: tau in (0,1)");
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("asymptotics: sigma_eps > 0");
    if (!(beta_second_moment >= 0.0)) {
      throw std::invalid_argument("asymptotics: beta_second_moment >= 0");
    }
    if (!(lambda_scaled >= 0.0)) throw std::invalid_argument("asymptotics: lambda >= 0");
  }
};

struct AsymptoticSolution {
  double beta0_star = 0.0;
  double m_u_star = 0.0;
  double rho1_star = 0.0;
  double m_eta_star = 0.0;
  double rho2_star = 0.0;
  double objective_value = 0.0;
  double predicted_coverage = 0.0;  // P(Z <= 0) under the limiting dual law
  bool degenerate = false;          // m_u_star below the two-point-law threshold
  bool converged = false;
  int widenings = 0;                // automatic box enlargements performed
};

/// Saddle objective of the asymptotic program (outer min variables first).
/// Exposed for the convexity/concavity cross-section checks.
double asymptotic_objective(const AsymptoticProblem& problem, double beta0, double m_u,
                            double rho1, double m_eta, double rho2);

/// Solves the 5-variable min-max program: outer min over (beta0, M_u, rho1)
/// by Nelder-Mead, inner max over (M_eta, rho2) by coordinate golden-section.
/// Gaussian expectations use a 129-node Gauss-Hermite rule. Throws on
/// non-convergence or out-of-range gamma.
AsymptoticSolution solve_asymptotic(const AsymptoticProblem& problem);

/// The limiting dual law P_eta: point masses at the box edges and, in the
/// nondegenerate case, a scaled-Gaussian interior. Degenerate solutions give
/// the two-point law p*delta_{-(1-tau)} + (1-p)*delta_tau.
class LimitingDualLaw {
 public:
  LimitingDualLaw(const AsymptoticSolution& solution, const AsymptoticProblem& problem);

  bool degenerate() const { return degenerate_; }
  double lower_edge() const { return -(1.0 - tau_); }
  double upper_edge() const { return tau_; }
  double mass_lower() const { return mass_lower_; }
  double mass_upper() const { return mass_upper_; }

  double cdf(double z) const;
  double quantile(double q) const;           // left-continuous inverse CDF
  double prob_nonpositive() const;           // P(Z <= 0)
  double density_interior(double z) const;   // 0 outside the open interval
  double sample(RandomStream& rng) const;

 private:
  bool degenerate_ = false;
  double tau_ = 0.5;
  double mass_lower_ = 0.0;
  double mass_upper_ = 0.0;
  // Nondegenerate parameters: Z = clip(W, edges*rho_tilde) / rho_tilde with
  // W ~ N(-beta0, varsigma^2).
  double rho_tilde_ = 1.0;
  double w_mean_ = 0.0;
  double w_sd_ = 1.0;
};

LimitingDualLaw limiting_dual_law(const AsymptoticSolution& solution,
                                  const AsymptoticProblem& problem);

/// (beta0*, M_u*): the limits of the fitted intercept and of the coefficient
/// estimation error ||beta_hat - beta_true||.
std::pair<double, double> predicted_primal_limits(const AsymptoticSolution& solution);

}  // namespace qrdual
