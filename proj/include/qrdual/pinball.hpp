#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qrdual {

/// Pinball (check) loss: tau*r - min(r, 0).
inline double pinball_loss(double tau, double r) {
  return tau * r - std::min(r, 0.0);
}

/// Proximal map of the pinball loss, argmin_v (1/(2*rho))*(v-x)^2 + l_tau(v).
/// Soft-threshold with an asymmetric dead zone [-rho*(1-tau), rho*tau].
inline double pinball_prox(double x, double rho, double tau) {
  if (!(rho > 0.0)) throw std::invalid_argument("pinball_prox: rho must be > 0");
  const double hi = rho * tau;
  const double lo = -rho * (1.0 - tau);
  if (x > hi) return x - hi;
  if (x < lo) return x - lo;
  return 0.0;
}

/// Moreau envelope of the pinball loss. rho = 0 returns l_tau(x) by the
/// continuous extension. Piecewise: linear tails, x^2/(2*rho) in the middle.
inline double pinball_envelope(double x, double rho, double tau) {
  if (rho < 0.0) throw std::invalid_argument("pinball_envelope: rho must be >= 0");
  if (rho == 0.0) return pinball_loss(tau, x);
  const double omt = 1.0 - tau;
  if (x > rho * tau) return 0.5 * tau * tau * rho + tau * (x - rho * tau);
  if (x < -rho * omt) return 0.5 * omt * omt * rho - omt * (x + rho * omt);
  return x * x / (2.0 * rho);
}

/// Envelope of the pinball conjugate (the indicator of [-(1-tau), tau]):
/// squared distance to the box over 2*rho.
inline double pinball_conjugate_envelope(double z, double rho, double tau) {
  if (!(rho > 0.0)) {
    throw std::invalid_argument("pinball_conjugate_envelope: rho must be > 0");
  }
  const double clipped = std::clamp(z, -(1.0 - tau), tau);
  const double dist = z - clipped;
  return dist * dist / (2.0 * rho);
}

}  // namespace qrdual
