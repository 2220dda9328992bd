#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "causalmix/rng.hpp"

namespace testsupport {

/// Relative error with an absolute floor, for gradient checks: a result
/// below 1e-4 means |a-b| <= 1e-4 * max(|a|, |b|) with atol 1e-7 for
/// near-zero gradients (central differences bottom out around 1e-9).
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-3, std::fabs(a), std::fabs(b)});
}

/// Central finite difference of a scalar functional with respect to one
/// coordinate reachable through the supplied reference.
inline double central_diff(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline std::vector<double> random_vector(std::size_t n, causalmix::Rng& rng, double lo = -2.0,
                                         double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testsupport
