#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace mcrd::quad {

struct SimpsonResult {
  double value;
  double delta;
  int panels;
};

// Composite Simpson with Richardson extrapolation, doubling panels until the change is below tol.
template <class F>
SimpsonResult simpson_richardson(F&& f, double a, double b, double tol = 1e-12, int max_panels = 1 << 20) {
  auto simpson = [&](int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * ((i % 2) ? 4.0 : 2.0);
    return s * h / 3.0;
  };
  int n = 8;
  double prev_s = simpson(n);
  double prev_r = prev_s;
  double delta = INFINITY;
  bool have_r = false;
  while (n < max_panels) {
    n *= 2;
    const double s = simpson(n);
    const double r = s + (s - prev_s) / 15.0;
    if (have_r) {
      delta = std::abs(r - prev_r);
      if (delta <= tol) return {r, delta, n};
    }
    have_r = true;
    prev_s = s;
    prev_r = r;
  }
  return {prev_r, delta, n};
}

// Trapezoid weights on a uniform grid.
inline Eigen::ArrayXd trapezoid_weights(int n, double h) {
  Eigen::ArrayXd w = Eigen::ArrayXd::Constant(n, h);
  w(0) = w(n - 1) = 0.5 * h;
  return w;
}

// Five-point Gauss-Legendre rule on [-1, 1].
inline const std::array<std::array<double, 2>, 5>& gauss5() {
  static const std::array<std::array<double, 2>, 5> g = {{
      {-0.9061798459386640, 0.2369268850561891},
      {-0.5384693101056831, 0.4786286704993665},
      {0.0, 0.5688888888888889},
      {0.5384693101056831, 0.4786286704993665},
      {0.9061798459386640, 0.2369268850561891},
  }};
  return g;
}

}  // namespace mcrd::quad
