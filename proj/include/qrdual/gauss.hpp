#pragma once

#include <functional>
#include <vector>

namespace qrdual {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Standard normal quantile (inverse CDF), accurate to ~1e-15.
/// Throws std::invalid_argument outside (0,1).
double normal_quantile(double p);

/// Gauss-Hermite rule for the weight e^{-x^2} (physicists' convention),
/// computed by Golub-Welsch. Integrates polynomials up to degree 2n-1 exactly.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussHermiteRule(int n);

  /// E[f(W)] for W ~ N(mean, sd^2).
  double gaussian_expectation(double mean, double sd,
                              const std::function<double(double)>& f) const;
};

}  // namespace qrdual
