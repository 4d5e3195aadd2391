#pragma once

#include <Eigen/Core>
#include <vector>

namespace qrdual {

/// Left-continuous inverse CDF of the empirical distribution:
/// inf{t : #{v_i <= t}/n >= level}, i.e. the ceil(level*n)-th order statistic.
/// Throws DataError on empty or non-finite input, std::invalid_argument if
/// level is outside (0,1).
double empirical_quantile(double level, std::vector<double> values);
double empirical_quantile(double level, const Eigen::VectorXd& values);

}  // namespace qrdual
