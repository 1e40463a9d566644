#pragma once

#include "mcrd/profile.hpp"
#include "mcrd/tridiag.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace mcrd {

struct Problem {
  const BistableReaction* reaction = nullptr;
  const RadialGrid* grid = nullptr;
  double M = 0.0, eps = 0.0, D = 1.0;
};

// F(u)_i = eps^2 (lap u)_i + f(u_i, S^eps[u] - (eps/D) u_i).
inline Eigen::ArrayXd apply_F(const Problem& p, const Eigen::ArrayXd& u) {
  const double S = nonlocal_mean(*p.grid, u, p.M, p.eps, p.D);
  return residual_kernel(*p.reaction, u, p.grid->laplacian(u), S, p.eps, p.D);
}

// Jacobian of F: tridiagonal T plus the rank-one nonlocal part c w^T.
struct DiscreteOperator {
  Eigen::ArrayXd lo, di, up;  // T
  Eigen::ArrayXd c, w;        // c_i = -(1 - eps/D) f_v, w = mean weights

  Eigen::ArrayXd apply(const Eigen::ArrayXd& x) const {
    const Eigen::Index n = x.size();
    Eigen::ArrayXd y = di * x + c * (w * x).sum();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i > 0) y(i) += lo(i) * x(i - 1);
      if (i + 1 < n) y(i) += up(i) * x(i + 1);
    }
    return y;
  }

  Eigen::MatrixXd dense() const {
    const Eigen::Index n = di.size();
    Eigen::MatrixXd A = c.matrix() * w.matrix().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      A(i, i) += di(i);
      if (i > 0) A(i, i - 1) += lo(i);
      if (i + 1 < n) A(i, i + 1) += up(i);
    }
    return A;
  }
};

inline DiscreteOperator linearize(const Problem& p, const Eigen::ArrayXd& u) {
  const auto& G = *p.grid;
  DiscreteOperator op;
  G.laplacian_bands(op.lo, op.di, op.up);
  const double e2 = p.eps * p.eps;
  op.lo *= e2;
  op.di *= e2;
  op.up *= e2;
  const double S = nonlocal_mean(G, u, p.M, p.eps, p.D);
  const int n = G.n();
  op.c.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = S - p.eps / p.D * u(i);
    const double fu = p.reaction->partial(1, 0, u(i), v), fv = p.reaction->partial(0, 1, u(i), v);
    op.di(i) += fu - p.eps / p.D * fv;
    op.c(i) = -(1.0 - p.eps / p.D) * fv;
  }
  op.w = G.mean_w;
  return op;
}

struct RankOneSolver {
  TridiagLU T;
  Eigen::VectorXd Tc;  // T^{-1} c
  double denom = 1.0;  // 1 + w^T T^{-1} c
  const DiscreteOperator* op = nullptr;
};

inline RankOneSolver factor_operator(const DiscreteOperator& op) {
  RankOneSolver s;
  s.op = &op;
  s.T.factor(op.lo, op.di, op.up);
  if (op.c.matrix().squaredNorm() > 0.0) {
    s.Tc = s.T.solve(op.c.matrix());
    s.denom = 1.0 + op.w.matrix().dot(s.Tc);
    if (std::abs(s.denom) < 1e-12) throw Error(ErrorCode::SingularJacobian, "rank-one denominator " + sci(s.denom));
  }
  return s;
}

// (T + c w^T) x = rhs by Sherman-Morrison, with one step of iterative refinement.
inline Eigen::ArrayXd jacobian_solve(const RankOneSolver& s, const Eigen::ArrayXd& rhs) {
  const auto& op = *s.op;
  auto once = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd x = s.T.solve(b);
    if (s.Tc.size()) x -= s.Tc * (op.w.matrix().dot(x) / s.denom);
    return x;
  };
  Eigen::VectorXd x = once(rhs.matrix());
  const Eigen::VectorXd r = rhs.matrix() - op.apply(x.array()).matrix();
  x += once(r);
  return x.array();
}

inline Eigen::ArrayXd jacobian_solve(const DiscreteOperator& op, const Eigen::ArrayXd& rhs) {
  return jacobian_solve(factor_operator(op), rhs);
}

struct NewtonOptions {
  double tol = 1e-11;
  int max_iter = 25;
  int max_backtracks = 30;
  bool continuation = false;
};

struct NewtonResult {
  Eigen::ArrayXd u;
  int iterations = 0;
  std::vector<double> history;  // ||F||_inf before each step and at the end
  double residual = 0.0;
  double floor = 0.0;  // rounding level of ||F||; a stalled line search below it is accepted
  bool continued = false;
};

// Rounding level of ||F||_inf at u: unit roundoff times the largest row magnitude of eps^2 lap.
inline double rounding_floor(const Problem& p, const Eigen::ArrayXd& u) {
  const auto& G = *p.grid;
  double row = 0.0;
  for (int i = 0; i < G.n(); ++i) {
    double s = 0.0;
    if (i > 0) s += G.flux(i - 1);
    if (i + 1 < G.n()) s += G.flux(i);
    row = std::max(row, 2.0 * s / G.vol(i));
  }
  return 4.0 * std::numeric_limits<double>::epsilon() * p.eps * p.eps * row * (1.0 + u.abs().maxCoeff());
}

inline NewtonResult newton_solve(const Problem& p, Eigen::ArrayXd u, const NewtonOptions& opt = {}) {
  NewtonResult out;
  Eigen::ArrayXd F = apply_F(p, u);
  double res = F.abs().maxCoeff();
  out.floor = rounding_floor(p, u);
  out.history.push_back(res);
  while (res > opt.tol) {
    if (out.iterations >= opt.max_iter)
      throw Error(ErrorCode::NoConvergence, "Newton residual " + sci(res) + " after " + std::to_string(out.iterations) +
                                                " iterations");
    const DiscreteOperator op = linearize(p, u);
    const Eigen::ArrayXd du = jacobian_solve(op, -F);
    double t = 1.0;
    Eigen::ArrayXd un, Fn;
    double rn = std::numeric_limits<double>::infinity();
    for (int b = 0; b <= opt.max_backtracks; ++b) {
      un = u + t * du;
      Fn = apply_F(p, un);
      rn = Fn.abs().maxCoeff();
      if (std::isfinite(rn) && rn < (1.0 - 1e-4 * t) * res) break;
      t *= 0.5;
    }
    ++out.iterations;
    if (!(rn < res)) {
      // No decrease: accept only if already at rounding level.
      if (res <= std::max(opt.tol, out.floor)) break;
      throw Error(ErrorCode::NoConvergence, "line search stalled at residual " + sci(res));
    }
    u = un;
    F = Fn;
    res = rn;
    out.history.push_back(res);
  }
  out.u = std::move(u);
  out.residual = res;
  return out;
}

struct SolvedState {
  Problem problem;
  NewtonResult newton;
  Eigen::ArrayXd v;
  double S = 0.0;
  double mass_defect = 0.0;
};

// Newton from an assembled u_k on its own grid; optional continuation walks eps down from 2 eps.
inline SolvedState solve_from(const ApproximateSolution& init, const ExpansionData& e, const NewtonOptions& opt = {}) {
  SolvedState s;
  s.problem = Problem{&e.eq.reaction, &init.grid, e.M, init.eps, e.D};
  try {
    s.newton = newton_solve(s.problem, init.u, opt);
  } catch (const Error& err) {
    if (!opt.continuation || err.code() != ErrorCode::NoConvergence) throw;
    Eigen::ArrayXd u = init.u;
    const int steps = 4;
    for (int i = 0; i <= steps; ++i) {
      const double eps = init.eps * std::pow(2.0, 1.0 - static_cast<double>(i) / steps);
      Problem q{&e.eq.reaction, &init.grid, e.M, eps, e.D};
      if (i == 0) u = assemble_on(e, eps, init.grid).u;
      u = newton_solve(q, u, opt).u;
    }
    s.newton = newton_solve(s.problem, u, opt);
    s.newton.continued = true;
  }
  s.S = nonlocal_mean(init.grid, s.newton.u, e.M, init.eps, e.D);
  s.v = s.S - init.eps / e.D * s.newton.u;
  s.mass_defect = std::abs(init.grid.mean(s.newton.u + s.v) - e.M);
  return s;
}

struct AccuracyRow {
  double eps = 0.0;
  int k = 0;
  double du_inf = 0.0, dv_inf = 0.0;
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;
  std::vector<std::pair<int, double>> u_slopes, v_slopes;
};

// ||u - u_k||_inf and ||v - v_k||_inf per (eps, k) with fitted slopes per k.
inline AccuracyReport accuracy_report(const std::vector<Eigen::ArrayXd>& u_exact, const std::vector<Eigen::ArrayXd>& v_exact,
                                      const std::vector<std::vector<ApproximateSolution>>& approx,
                                      const std::vector<double>& eps_list) {
  AccuracyReport rep;
  for (const auto& fam : approx) {
    if (fam.size() != eps_list.size()) throw Error(ErrorCode::InvalidArgument, "family size must match eps list");
    std::vector<double> du, dv;
    for (std::size_t i = 0; i < fam.size(); ++i) {
      AccuracyRow row;
      row.eps = eps_list[i];
      row.k = fam[i].k;
      row.du_inf = (u_exact[i] - fam[i].u).abs().maxCoeff();
      row.dv_inf = (v_exact[i] - fam[i].v).abs().maxCoeff();
      du.push_back(row.du_inf);
      dv.push_back(row.dv_inf);
      rep.rows.push_back(row);
    }
    rep.u_slopes.emplace_back(fam.front().k, loglog_slope(eps_list, du));
    rep.v_slopes.emplace_back(fam.front().k, loglog_slope(eps_list, dv));
  }
  return rep;
}

}  // namespace mcrd
