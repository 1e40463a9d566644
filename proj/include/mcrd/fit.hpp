#pragma once

#include "mcrd/error.hpp"

#include <cmath>
#include <vector>

namespace mcrd {

// Least-squares slope of log|y| against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InvalidArgument, "slope fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(std::abs(y[i]));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Value at x = 0 of the polynomial through (x_i, y_i) (Neville), i.e. Richardson extrapolation
// for an error expansion in integer powers of x.
inline double extrapolate_to_zero(const std::vector<double>& x, std::vector<double> y) {
  const std::size_t n = x.size();
  if (n == 0 || y.size() != n) throw Error(ErrorCode::InvalidArgument, "extrapolation needs matching samples");
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t i = 0; i + m < n; ++i) y[i] = (x[i + m] * y[i] - x[i] * y[i + 1]) / (x[i + m] - x[i]);
  return y[0];
}

}  // namespace mcrd
