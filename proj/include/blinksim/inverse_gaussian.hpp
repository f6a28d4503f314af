#pragma once

#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace blinksim {

/*
 * Draws from the Inverse Gaussian distribution IG(mean, shape), the first-passage
 * time of Brownian motion with positive drift to a fixed level. Variance is
 * mean^3 / shape. Uses the transformation method of Michael, Schucany and Haas:
 * one normal draw, one uniform draw for the root selection.
 */
inline double sample_inverse_gaussian(double mean, double shape, CounterRng& rng) {
  detail::require(shape > 0.0, "inverse Gaussian shape must be positive, got ", shape);
  if (!(mean > 0.0)) return 0.0;
  const double nu = rng.normal();
  const double y = nu * nu;
  const double my = mean * y;
  const double x = mean * (1.0 + (my - std::sqrt(4.0 * shape * my + my * my)) / (2.0 * shape));
  const double u = rng.uniform();
  return u <= mean / (mean + x) ? x : mean * mean / x;
}

}  // namespace blinksim
