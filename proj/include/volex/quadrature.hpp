#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "volex/errors.hpp"

namespace volex::quad {

/// Composite Simpson rule with n (rounded up to even) subintervals. The right
/// endpoint is sampled one ulp inside, so right-continuous step functions see
/// the value of the piece being integrated.
template <class F>
double simpson(F&& f, double a, double b, int n) {
  if (!(b > a)) return 0.0;
  if (n < 2) n = 2;
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = (i == n) ? std::nextafter(b, a) : a + i * h;
    const double fs = f(s);
    if (!std::isfinite(fs)) {
      std::ostringstream msg;
      msg << "quadrature: non-finite integrand " << fs << " at s = " << s << " on [" << a << ", " << b << "]";
      throw SolverError(msg.str());
    }
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * fs;
  }
  return acc * h / 3.0;
}

/// Simpson on each sub-interval of [a, b] delimited by `breaks`, so
/// integrands with jumps at known points keep full order.
template <class F>
double simpson_split(F&& f, double a, double b, const std::vector<double>& breaks, int n) {
  double acc = 0.0;
  double lo = a;
  for (double br : breaks) {
    if (br <= lo) continue;
    if (br >= b) break;
    acc += simpson(f, lo, br, n);
    lo = br;
  }
  return acc + simpson(f, lo, b, n);
}

}  // namespace volex::quad
