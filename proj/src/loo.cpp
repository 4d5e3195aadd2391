#include "qrdual/loo.hpp"

#include <cmath>
#include <string>

#include "qrdual/errors.hpp"
#include "qrdual/parallel.hpp"

namespace qrdual {

LooSummary loo_coverage_dual(const FitResult& fit) {
  const Eigen::Index n = fit.duals.size();
  LooSummary out;
  out.per_sample_covered.resize(n);
  int covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = fit.duals(i);
    const bool cov = eta <= kSignEps;
    out.per_sample_covered[i] = cov;
    covered += cov ? 1 : 0;
    if (std::abs(eta) <= kSignEps) ++out.tie_count;
  }
  out.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return out;
}

LooSummary loo_coverage_bruteforce(const Dataset& data, const ProblemSpec& spec,
                                   const SolverConfig& config) {
  data.validate();
  const Eigen::Index n = data.n_samples();
  if (n < 2) throw DataError("loo_coverage_bruteforce: need n >= 2");

  const FitResult full = fit(data, spec, config);
  const double tol = 1e-9 * data.response_scale_hint();

  std::vector<char> covered(n, 0);
  std::vector<char> tied(n, 0);
  std::vector<std::string> failures(n);

  parallel_for(0, static_cast<int>(n), [&](int i) {
    Matrix x_loo(n - 1, data.n_features());
    Vector y_loo(n - 1);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      x_loo.row(k) = data.features.row(j);
      y_loo(k) = data.response(j);
      ++k;
    }
    SolverConfig cfg = config;
    cfg.warm_start = &full;
    FitResult loo;
    try {
      loo = fit(make_dataset(std::move(x_loo), std::move(y_loo)), spec, cfg);
    } catch (const SolverError& e) {
      failures[i] = e.what();
      return;
    }
    double fitted = loo.intercept_or_offset;
    if (data.n_features() > 0) fitted += data.features.row(i).dot(loo.beta);
    const double gap = data.response(i) - fitted;
    covered[i] = gap <= tol ? 1 : 0;
    tied[i] = std::abs(gap) <= tol ? 1 : 0;
  });

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!failures[i].empty()) {
      throw SolverError("leave-one-out refit " + std::to_string(i) +
                            " failed: " + failures[i],
                        full);
    }
  }

  LooSummary out;
  out.per_sample_covered.resize(n);
  int total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.per_sample_covered[i] = covered[i] != 0;
    total += covered[i];
    out.tie_count += tied[i];
  }
  out.coverage = static_cast<double>(total) / static_cast<double>(n);
  return out;
}

double loo_multiaccuracy(const FitResult& fit_result, const Dataset& data, double tau) {
  const Eigen::Index n = data.n_samples();
  const Eigen::Index d = data.n_features();
  if (d < 1) throw std::invalid_argument("loo_multiaccuracy: need d >= 1");
  if (fit_result.duals.size() != n) {
    throw DataError("loo_multiaccuracy: fit and dataset sizes disagree");
  }

  Vector centered(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered(i) = (fit_result.duals(i) <= kSignEps ? 1.0 : 0.0) - tau;
  }

  double worst = -1.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double denom = data.features.col(j).cwiseAbs().mean();
    if (denom == 0.0) continue;
    const double num = std::abs(data.features.col(j).dot(centered)) / static_cast<double>(n);
    worst = std::max(worst, num / denom);
  }
  if (worst < 0.0) throw DataError("loo_multiaccuracy: all feature columns are zero");
  return worst;
}

}  // namespace qrdual
