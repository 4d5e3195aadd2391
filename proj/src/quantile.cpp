#include "qrdual/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qrdual/errors.hpp"

namespace qrdual {

double empirical_quantile(double level, std::vector<double> values) {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("empirical_quantile: level must be in (0,1)");
  }
  if (values.empty()) throw DataError("empirical_quantile: empty input");
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("empirical_quantile: non-finite value");
  }
  const auto n = static_cast<double>(values.size());
  // Guard against ceil(0.9 * 10) == 10 from floating-point round-up.
  const double t = level * n;
  auto k = static_cast<std::ptrdiff_t>(std::ceil(t - 1e-9 * std::max(1.0, t)));
  k = std::clamp<std::ptrdiff_t>(k, 1, values.size());
  std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
  return values[k - 1];
}

double empirical_quantile(double level, const Eigen::VectorXd& values) {
  return empirical_quantile(level,
                            std::vector<double>(values.data(), values.data() + values.size()));
}

}  // namespace qrdual
