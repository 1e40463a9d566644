#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <vector>

namespace mcrd::fd {

// Fourth-order finite-difference stencils on a uniform grid, one-sided near the ends.
struct Stencil {
  int start = 0;
  int len = 0;
  std::array<double, 6> c{};
};

inline Stencil d1_stencil(int i, int n, double h) {
  Stencil s;
  const double k = 1.0 / (12.0 * h);
  auto set = [&](int start, std::initializer_list<double> cs) {
    s.start = start;
    s.len = static_cast<int>(cs.size());
    int j = 0;
    for (double c : cs) s.c[j++] = c * k;
  };
  if (i == 0) {
    set(0, {-25, 48, -36, 16, -3});
  } else if (i == 1) {
    set(0, {-3, -10, 18, -6, 1});
  } else if (i == n - 2) {
    set(n - 5, {-1, 6, -18, 10, 3});
  } else if (i == n - 1) {
    set(n - 5, {3, -16, 36, -48, 25});
  } else {
    set(i - 2, {1, -8, 0, 8, -1});
  }
  return s;
}

inline Stencil d2_stencil(int i, int n, double h) {
  Stencil s;
  const double k = 1.0 / (12.0 * h * h);
  auto set = [&](int start, std::initializer_list<double> cs) {
    s.start = start;
    s.len = static_cast<int>(cs.size());
    int j = 0;
    for (double c : cs) s.c[j++] = c * k;
  };
  if (i == 0) {
    set(0, {45, -154, 214, -156, 61, -10});
  } else if (i == 1) {
    set(0, {10, -15, -4, 14, -6, 1});
  } else if (i == n - 2) {
    set(n - 6, {1, -6, 14, -4, -15, 10});
  } else if (i == n - 1) {
    set(n - 6, {-10, 61, -156, 214, -154, 45});
  } else {
    set(i - 2, {-1, 16, -30, 16, -1});
  }
  return s;
}

inline double apply(const Stencil& s, const Eigen::ArrayXd& u) {
  double acc = 0.0;
  for (int j = 0; j < s.len; ++j) acc += s.c[j] * u(s.start + j);
  return acc;
}

inline Eigen::ArrayXd d1(const Eigen::ArrayXd& u, double h) {
  const int n = static_cast<int>(u.size());
  Eigen::ArrayXd out(n);
  for (int i = 0; i < n; ++i) out(i) = apply(d1_stencil(i, n, h), u);
  return out;
}

inline Eigen::ArrayXd d2(const Eigen::ArrayXd& u, double h) {
  const int n = static_cast<int>(u.size());
  Eigen::ArrayXd out(n);
  for (int i = 0; i < n; ++i) out(i) = apply(d2_stencil(i, n, h), u);
  return out;
}

inline void add_stencil(std::vector<Eigen::Triplet<double>>& t, int row, const Stencil& s, double scale) {
  for (int j = 0; j < s.len; ++j) t.emplace_back(row, s.start + j, scale * s.c[j]);
}

// Lagrange weights of the six nodes nearest to x on the grid z0 + i h.
inline std::pair<int, std::array<double, 6>> lagrange6(double x, double z0, double h, int n) {
  int start = static_cast<int>(std::floor((x - z0) / h)) - 2;
  start = std::max(0, std::min(n - 6, start));
  std::array<double, 6> w{};
  for (int a = 0; a < 6; ++a) {
    double p = 1.0;
    const double za = z0 + (start + a) * h;
    for (int b = 0; b < 6; ++b) {
      if (b == a) continue;
      const double zb = z0 + (start + b) * h;
      p *= (x - zb) / (za - zb);
    }
    w[a] = p;
  }
  return {start, w};
}

}  // namespace mcrd::fd
