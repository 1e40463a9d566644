#pragma once

#include "mcrd/expansion.hpp"
#include "mcrd/fit.hpp"
#include "mcrd/grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <future>
#include <vector>

namespace mcrd {

inline double interface_radius(const EquilibriumStructure& eq, double M, int N, bool mirrored = false) {
  return interface_radius_raw(eq, M, N, mirrored);
}

struct Cutoff {
  double value = 0.0, d1 = 0.0, d2 = 0.0;
};

// Smooth even cutoff: 1 on |x| <= 1, 0 on |x| >= 2, built from exp(-1/t) transitions.
inline Cutoff cutoff_theta(double x) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return {1.0, 0.0, 0.0};
  if (ax >= 2.0) return {0.0, 0.0, 0.0};
  auto g = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  auto g1 = [&](double t) { return t > 0.0 ? g(t) / (t * t) : 0.0; };
  auto g2 = [&](double t) { return t > 0.0 ? g(t) * (1.0 - 2.0 * t) / (t * t * t * t) : 0.0; };
  const double t = ax - 1.0;
  const double a = g(1.0 - t), b = g(t);
  const double a1 = -g1(1.0 - t), b1 = g1(t);
  const double a2 = g2(1.0 - t), b2 = g2(t);
  const double S = a + b, S1 = a1 + b1, S2 = a2 + b2;
  const double s = a / S;
  const double s1 = a1 / S - a * S1 / (S * S);
  const double s2 = a2 / S - 2.0 * a1 * S1 / (S * S) - a * S2 / (S * S) + 2.0 * a * S1 * S1 / (S * S * S);
  const double sg = x < 0.0 ? -1.0 : 1.0;
  return {s, sg * s1, s2};
}

// S^eps[u] = M - (1 - eps/D) mean(u).
inline double nonlocal_mean(const RadialGrid& G, const Eigen::ArrayXd& u, double M, double eps, double D) {
  return M - (1.0 - eps / D) * G.mean(u);
}

// eps^2 lap_i + f(u_i, S - (eps/D) u_i); shared by the residual of u_k and the discrete map F.
inline Eigen::ArrayXd residual_kernel(const BistableReaction& r, const Eigen::ArrayXd& u, const Eigen::ArrayXd& lap,
                                      double S, double eps, double D) {
  Eigen::ArrayXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = eps * eps * lap(i) + r.f(u(i), S - eps / D * u(i));
  return out;
}

enum class Region { Outer = 1, Blend = 2, Inner = 3 };

struct ApproximateSolution {
  double eps = 0.0, D = 1.0, M = 0.0;
  int k = 0, N = 1;
  bool mirrored = false;
  double R_star = 0.0, r0 = 0.0;
  RadialGrid grid;
  Eigen::ArrayXd u, u_r, u_rr, v;
  std::vector<Region> region;
  double S_value = 0.0;
  Eigen::ArrayXd residual;
  double residual_norm_inf = 0.0;
  double res_outer = 0.0, res_blend = 0.0, res_inner = 0.0;

  double mass_defect() const { return std::abs(grid.mean(u + v) - M); }
};

struct AssembleOptions {
  GridOptions grid;
};

struct GluedValue {
  double u = 0.0, u_r = 0.0, u_rr = 0.0;
  Region region = Region::Outer;
};

// u_k(r) = U_k(r) + theta((r - R*)/r0) [w_k((r - R*)/eps) - U_k(r)] with exact derivatives.
inline GluedValue glue(const ExpansionData& e, double eps, double r) {
  const double x = (r - e.R_star) / e.r0;
  const Cutoff th = cutoff_theta(x);
  const double U = e.outer_sum(eps, r < e.R_star);
  GluedValue g;
  g.region = std::abs(x) >= 2.0 ? Region::Outer : (std::abs(x) <= 1.0 ? Region::Inner : Region::Blend);
  if (g.region == Region::Outer) {
    g.u = U;
    return g;
  }
  const double z = (r - e.R_star) / eps;
  double w = 0.0, wz = 0.0, wzz = 0.0, p = 1.0;
  for (int j = 0; j <= e.k; ++j) {
    const InnerValue iv = e.inner_eval(j, z);
    w += p * iv.w;
    wz += p * iv.wz;
    wzz += p * iv.wzz;
    p *= eps;
  }
  const double d = w - U;
  g.u = U + th.value * d;
  g.u_r = th.d1 / e.r0 * d + th.value * wz / eps;
  g.u_rr = th.d2 / (e.r0 * e.r0) * d + 2.0 * th.d1 / e.r0 * wz / eps + th.value * wzz / (eps * eps);
  return g;
}

// Radial Laplacian from u_r, u_rr (N u_rr at the origin).
inline Eigen::ArrayXd radial_laplacian(const RadialGrid& G, const Eigen::ArrayXd& ur, const Eigen::ArrayXd& urr) {
  Eigen::ArrayXd lap(G.n());
  for (int i = 0; i < G.n(); ++i)
    lap(i) = G.r(i) == 0.0 ? G.N * urr(i) : urr(i) + (G.N - 1) / G.r(i) * ur(i);
  return lap;
}

inline void evaluate_residual(ApproximateSolution& s, const BistableReaction& r) {
  const Eigen::ArrayXd lap = radial_laplacian(s.grid, s.u_r, s.u_rr);
  s.residual = residual_kernel(r, s.u, lap, s.S_value, s.eps, s.D);
  s.residual_norm_inf = s.residual.abs().maxCoeff();
  s.res_outer = s.res_blend = s.res_inner = 0.0;
  for (int i = 0; i < s.grid.n(); ++i) {
    double& slot = s.region[i] == Region::Outer ? s.res_outer : (s.region[i] == Region::Blend ? s.res_blend : s.res_inner);
    slot = std::max(slot, std::abs(s.residual(i)));
  }
}

inline ApproximateSolution assemble_on(const ExpansionData& e, double eps, RadialGrid grid) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
  ApproximateSolution s;
  s.eps = eps;
  s.D = e.D;
  s.M = e.M;
  s.k = e.k;
  s.N = e.N;
  s.mirrored = e.mirrored;
  s.R_star = e.R_star;
  s.r0 = e.r0;
  s.grid = std::move(grid);
  const int n = s.grid.n();
  s.u.resize(n);
  s.u_r.resize(n);
  s.u_rr.resize(n);
  s.region.resize(n);
  for (int i = 0; i < n; ++i) {
    const GluedValue g = glue(e, eps, s.grid.r(i));
    s.u(i) = g.u;
    s.u_r(i) = g.u_r;
    s.u_rr(i) = g.u_rr;
    s.region[i] = g.region;
  }
  s.S_value = nonlocal_mean(s.grid, s.u, e.M, eps, e.D);
  s.v = s.S_value - eps / e.D * s.u;
  evaluate_residual(s, e.eq.reaction);
  return s;
}

inline ApproximateSolution assemble(const ExpansionData& e, double eps, const AssembleOptions& opt = {}) {
  return assemble_on(e, eps, make_layer_grid(e.N, e.R_star, e.r0, eps, opt.grid));
}

// |S^eps[u_k] - v* - sum_{j=1}^{k+1} eps^j A_j|.
inline double mean_expansion_defect(const ApproximateSolution& s, const ExpansionData& e) {
  double pred = e.A[0], p = 1.0;
  for (int j = 1; j <= e.k + 1; ++j) {
    p *= s.eps;
    pred += p * e.A[j];
  }
  return std::abs(s.S_value - pred);
}

// Smallest K (in units of eps, resolution 0.1) with |u - h_in| < eta on r <= R* - eps K and
// |u - h_out| < eta on r >= R* + eps K; h_in/h_out are the inside/outside leading outer values.
inline double plateau_width(const Eigen::ArrayXd& r, const Eigen::ArrayXd& u, double R_star, double eps, double h_in,
                            double h_out, double eta) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double target = r(i) < R_star ? h_in : h_out;
    if (std::abs(u(i) - target) >= eta) worst = std::max(worst, std::abs(r(i) - R_star) / eps);
  }
  return std::ceil(worst * 10.0) / 10.0;
}

// Radius where u crosses level, by linear interpolation between bracketing nodes nearest R*.
inline double crossing_radius(const Eigen::ArrayXd& r, const Eigen::ArrayXd& u, double level, double R_star) {
  double best = std::numeric_limits<double>::quiet_NaN(), dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i + 1 < r.size(); ++i) {
    const double a = u(i) - level, b = u(i + 1) - level;
    if ((a <= 0.0 && b > 0.0) || (a >= 0.0 && b < 0.0)) {
      const double x = r(i) + (r(i + 1) - r(i)) * a / (a - b);
      if (std::abs(x - R_star) < dist) {
        dist = std::abs(x - R_star);
        best = x;
      }
    }
  }
  return best;
}

struct SweepRow {
  double eps = 0.0;
  double residual_inf = 0.0, res_outer = 0.0, res_blend = 0.0, res_inner = 0.0;
  double mean_defect = 0.0, mass_defect = 0.0;
  double v_dev = 0.0;  // max |v_k - v*|
  int nodes = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double slope = 0.0;       // residual order
  double mean_slope = 0.0;  // S-expansion defect order
};

inline SweepRow sweep_row(const ApproximateSolution& s, const ExpansionData& e) {
  SweepRow row;
  row.eps = s.eps;
  row.residual_inf = s.residual_norm_inf;
  row.res_outer = s.res_outer;
  row.res_blend = s.res_blend;
  row.res_inner = s.res_inner;
  row.mean_defect = mean_expansion_defect(s, e);
  row.mass_defect = s.mass_defect();
  row.v_dev = (s.v - e.A[0]).abs().maxCoeff();
  row.nodes = s.grid.n();
  return row;
}

// Residual and S-expansion orders over eps; rows sorted by decreasing eps, evaluated concurrently.
inline SweepResult residual_sweep(const ExpansionData& e, std::vector<double> eps_list, const AssembleOptions& opt = {}) {
  if (eps_list.size() < 3) throw Error(ErrorCode::InvalidArgument, "sweep needs >= 3 eps values");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  if (eps_list.front() < 4.0 * eps_list.back())
    throw Error(ErrorCode::InvalidArgument, "sweep must span a factor >= 4 in eps");
  std::vector<std::future<SweepRow>> jobs;
  for (double eps : eps_list)
    jobs.push_back(std::async(std::launch::async, [&e, eps, &opt] { return sweep_row(assemble(e, eps, opt), e); }));
  SweepResult out;
  std::vector<double> x, y, z;
  for (auto& j : jobs) {
    out.rows.push_back(j.get());
    x.push_back(out.rows.back().eps);
    y.push_back(out.rows.back().residual_inf);
    z.push_back(out.rows.back().mean_defect);
  }
  out.slope = loglog_slope(x, y);
  out.mean_slope = loglog_slope(x, z);
  return out;
}

}  // namespace mcrd
