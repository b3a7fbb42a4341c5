#pragma once

// Two-tailed Student's t p-value by direct numerical integration of the
// density, independent of the incomplete beta route used by the library.

#include <cmath>

namespace affect::testing {

inline double t_density(double t, double df) {
  const double log_c = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
  return std::exp(log_c - (df + 1.0) / 2.0 * std::log1p(t * t / df));
}

/// 1 - 2 * integral of the density over [0, |t|], composite Simpson rule.
inline double simpson_two_tailed_p(double t, double df, int intervals = 20000) {
  const double hi = std::abs(t);
  if (hi == 0.0) return 1.0;
  const double h = hi / intervals;
  double s = t_density(0.0, df) + t_density(hi, df);
  for (int i = 1; i < intervals; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * t_density(i * h, df);
  return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace affect::testing
