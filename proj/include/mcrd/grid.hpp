#pragma once

#include "mcrd/error.hpp"
#include "mcrd/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mcrd {

// |B_1| in R^N.
inline double ball_volume(int N) {
  if (N < 0) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 0");
  if (N == 0) return 1.0;
  if (N == 1) return 2.0;
  return 2.0 * std::numbers::pi * ball_volume(N - 2) / N;
}

struct GridOptions {
  double nodes_per_eps = 100.0;
  double coarse_spacing = 0.005;
  double growth = 1.1;
  double fine_cap_fraction = 1.0 / 200.0;  // fine spacing <= r0 * this
};

// Radial nodes on [0, 1] with mean weights and a finite-volume radial Laplacian.
struct RadialGrid {
  int N = 1;
  Eigen::ArrayXd r;
  Eigen::ArrayXd mean_w;  // (1/|Omega|) int_Omega g dx ~ sum mean_w g
  Eigen::ArrayXd vol;     // int over the control volume of r^{N-1} dr
  Eigen::ArrayXd flux;    // face^{N-1} / (r_{i+1} - r_i), one per interior face
  double omega = 2.0;
  double fine_lo = 0.0, fine_hi = 0.0, fine_h = 0.0;

  int n() const { return static_cast<int>(r.size()); }
  double mean(const Eigen::ArrayXd& u) const { return (mean_w * u).sum(); }

  // Discrete radial Laplacian with symmetry at r = 0 and zero flux at r = 1.
  Eigen::ArrayXd laplacian(const Eigen::ArrayXd& u) const {
    const int m = n();
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(m);
    for (int i = 0; i + 1 < m; ++i) {
      const double F = flux(i) * (u(i + 1) - u(i));
      out(i) += F;
      out(i + 1) -= F;
    }
    return out / vol;
  }

  // Tridiagonal coefficients of laplacian(): row i = lo(i) u_{i-1} + di(i) u_i + up(i) u_{i+1}.
  void laplacian_bands(Eigen::ArrayXd& lo, Eigen::ArrayXd& di, Eigen::ArrayXd& up) const {
    const int m = n();
    lo = di = up = Eigen::ArrayXd::Zero(m);
    for (int i = 0; i + 1 < m; ++i) {
      up(i) += flux(i) / vol(i);
      di(i) -= flux(i) / vol(i);
      lo(i + 1) += flux(i) / vol(i + 1);
      di(i + 1) -= flux(i) / vol(i + 1);
    }
  }
};

namespace grid_detail {

// Spacings growing geometrically from h0 (times growth) up to hmax until they cover length L,
// then rescaled to cover it exactly. Ordered from the fine side outward.
inline std::vector<double> graded(double L, double h0, double hmax, double growth) {
  std::vector<double> s;
  if (L <= 0.0) return s;
  double sum = 0.0, h = h0;
  while (sum < L) {
    h = std::min(h * growth, hmax);
    s.push_back(h);
    sum += h;
  }
  // Drop the last spacing if that lands closer to L.
  if (s.size() > 1 && std::abs(sum - s.back() - L) < std::abs(sum - L)) {
    sum -= s.back();
    s.pop_back();
  }
  for (auto& x : s) x *= L / sum;
  return s;
}

}  // namespace grid_detail

// Mean weights exact for piecewise-cubic g on each cell, integrated against N r^{N-1} by 5-point Gauss.
inline Eigen::ArrayXd mean_weights(const Eigen::ArrayXd& r, int N) {
  const int n = static_cast<int>(r.size());
  if (n < 4) throw Error(ErrorCode::GridTooCoarse, "need at least 4 radial nodes");
  Eigen::ArrayXd w = Eigen::ArrayXd::Zero(n);
  const auto& g = quad::gauss5();
  for (int i = 0; i + 1 < n; ++i) {
    const int s = std::clamp(i - 1, 0, n - 4);
    const double a = r(i), b = r(i + 1), hh = 0.5 * (b - a);
    for (const auto& [xi, wi] : g) {
      const double x = a + hh * (xi + 1.0);
      const double jac = wi * hh * N * std::pow(x, N - 1);
      for (int l = 0; l < 4; ++l) {
        double L = 1.0;
        for (int m = 0; m < 4; ++m)
          if (m != l) L *= (x - r(s + m)) / (r(s + l) - r(s + m));
        w(s + l) += jac * L;
      }
    }
  }
  return w;
}

inline RadialGrid make_grid_from_nodes(Eigen::ArrayXd r, int N) {
  RadialGrid G;
  G.N = N;
  G.omega = ball_volume(N);
  G.r = std::move(r);
  const int n = G.n();
  if (n < 4) throw Error(ErrorCode::GridTooCoarse, "need at least 4 radial nodes");
  G.mean_w = mean_weights(G.r, N);
  Eigen::ArrayXd face(n + 1);
  face(0) = 0.0;
  face(n) = 1.0;
  for (int i = 1; i < n; ++i) face(i) = 0.5 * (G.r(i - 1) + G.r(i));
  G.vol.resize(n);
  for (int i = 0; i < n; ++i) G.vol(i) = (std::pow(face(i + 1), N) - std::pow(face(i), N)) / N;
  G.flux.resize(n - 1);
  for (int i = 0; i + 1 < n; ++i) G.flux(i) = std::pow(face(i + 1), N - 1) / (G.r(i + 1) - G.r(i));
  return G;
}

inline RadialGrid uniform_grid(int n, int N) {
  return make_grid_from_nodes(Eigen::ArrayXd::LinSpaced(n, 0.0, 1.0), N);
}

// Composite grid: uniform fine segment on [center - half, center + half] with spacing
// min(eps / nodes_per_eps, r0 * cap), geometric grading (ratio <= growth) out to the coarse spacing.
inline RadialGrid make_layer_grid(int N, double center, double r0, double eps, const GridOptions& opt = {}) {
  if (opt.nodes_per_eps < 24.0)
    throw Error(ErrorCode::GridTooCoarse, "fewer than 24 nodes per eps across the layer");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  if (!(center > 0.0 && center < 1.0) || !(r0 > 0.0))
    throw Error(ErrorCode::InvalidArgument, "layer must lie inside (0, 1)");
  const double half = 2.0 * r0;
  const double a = std::max(center - half, 0.0), b = std::min(center + half, 1.0);
  const double hf_target = std::min(eps / opt.nodes_per_eps, r0 * opt.fine_cap_fraction);
  const int m = std::max(1, static_cast<int>(std::ceil((b - a) / hf_target - 1e-9)));
  const double hf = (b - a) / m;
  const double hc = std::max(hf, opt.coarse_spacing);
  const auto left = grid_detail::graded(a, hf, hc, opt.growth);
  const auto right = grid_detail::graded(1.0 - b, hf, hc, opt.growth);
  std::vector<double> x;
  x.reserve(left.size() + right.size() + m + 1);
  double pos = 0.0;
  x.push_back(0.0);
  for (auto it = left.rbegin(); it != left.rend(); ++it) x.push_back(pos += *it);
  x.back() = a;
  for (int i = 1; i <= m; ++i) x.push_back(a + (b - a) * i / m);
  pos = b;
  for (double s : right) x.push_back(pos += s);
  x.back() = 1.0;
  RadialGrid G = make_grid_from_nodes(Eigen::Map<Eigen::ArrayXd>(x.data(), static_cast<Eigen::Index>(x.size())), N);
  G.fine_lo = a;
  G.fine_hi = b;
  G.fine_h = hf;
  return G;
}

}  // namespace mcrd
