#pragma once

#include "mcrd/error.hpp"
#include "mcrd/fd.hpp"
#include "mcrd/quadrature.hpp"
#include "mcrd/reaction.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace mcrd {

struct WaveProfile {
  double s = 0.0;
  double Z = 0.0;
  int n = 0;
  double h = 0.0;
  Eigen::ArrayXd z, Q, Qz, Qzz;
  double c = 0.0;
  double m = 0.0;
  double m_tail = 0.0;
  double kappa_minus = 0.0;  // decay rate toward h^+ as z -> -inf
  double kappa_plus = 0.0;   // decay rate toward h^- as z -> +inf
  double d0 = 0.0;
  double h_minus = 0.0, h_zero = 0.0, h_plus = 0.0;
  int iterations = 0;
  double newton_residual = 0.0;
  double ode_residual = 0.0;
  double tail_deviation = 0.0;
  double phase_error = 0.0;

  // Value at z by six-point Lagrange interpolation.
  double value_at(const Eigen::ArrayXd& f, double x) const {
    auto [start, w] = fd::lagrange6(x, z(0), h, n);
    double acc = 0.0;
    for (int a = 0; a < 6; ++a) acc += w[a] * f(start + a);
    return acc;
  }
  Eigen::ArrayXd trapezoid() const { return quad::trapezoid_weights(n, h); }
};

struct WaveOptions {
  std::optional<double> Z{};
  int n_z = 4096;
  int max_iter = 50;
  double tol = 1e-11;
  double step_tol = 1e-13;
  // Perturbations of the initial guess.
  double guess_shift = 0.0;
  double guess_c = 0.0;
  bool enforce_preconditions = true;
};

struct WaveRates {
  double kappa_minus, kappa_plus, d0;
};

inline WaveRates wave_rates(const BistableReaction& r, double s) {
  const Roots h = equilibrium_roots(r, s);
  const double km = std::sqrt(-r.partial(1, 0, h.h_plus, s));
  const double kp = std::sqrt(-r.partial(1, 0, h.h_minus, s));
  return {km, kp, 0.9 * std::min(km, kp)};
}

inline double default_wave_Z(const BistableReaction& r, double s) {
  return std::max(16.0 / wave_rates(r, s).d0, 20.0);
}

inline double wave_mass(const WaveProfile& p) { return (p.trapezoid() * p.Qz.square()).sum(); }

inline WaveProfile solve_profile(const EquilibriumStructure& eq, double s, const WaveOptions& opt = {}) {
  const BistableReaction& r = eq.reaction;
  const Roots hr = equilibrium_roots(r, s);
  const WaveRates rates = wave_rates(r, s);
  WaveProfile P;
  P.s = s;
  P.h_minus = hr.h_minus;
  P.h_zero = hr.h_zero;
  P.h_plus = hr.h_plus;
  P.kappa_minus = rates.kappa_minus;
  P.kappa_plus = rates.kappa_plus;
  P.d0 = rates.d0;
  P.Z = opt.Z.value_or(std::max(16.0 / P.d0, 20.0));
  P.n = opt.n_z;
  if (opt.enforce_preconditions && (P.Z < 12.0 / P.d0 * (1.0 - 1e-12) || P.n < 1024))
    throw Error(ErrorCode::InvalidArgument, "wave grid requires Z >= 12/d0 and n_z >= 1024");
  const int n = P.n;
  P.h = 2.0 * P.Z / (n - 1);
  const double h = P.h;
  P.z = Eigen::ArrayXd::LinSpaced(n, -P.Z, P.Z);

  // Monotone tanh front with the phase pinned at z = 0.
  const double mid = 0.5 * (hr.h_plus + hr.h_minus);
  const double half = 0.5 * (hr.h_minus - hr.h_plus);
  const double z0 = -2.0 / P.d0 * std::atanh((hr.h_zero - mid) / half) + opt.guess_shift;
  Eigen::ArrayXd Q = mid + half * (0.5 * P.d0 * (P.z - z0)).tanh();
  const double jv = balance_integral(r, s);
  const Eigen::ArrayXd w = P.trapezoid();
  double c = -jv / (w * fd::d1(Q, h).square()).sum() + opt.guess_c;

  auto [phase_start, phase_w] = fd::lagrange6(0.0, -P.Z, h, n);
  const double km2 = 4.0 * P.kappa_minus * P.kappa_minus;
  const double kp2 = 4.0 * P.kappa_plus * P.kappa_plus;

  auto residual = [&](const Eigen::ArrayXd& q, double cc) {
    Eigen::VectorXd R(n + 1);
    for (int i = 1; i < n - 1; ++i)
      R(i) = fd::apply(fd::d2_stencil(i, n, h), q) - cc * fd::apply(fd::d1_stencil(i, n, h), q) + r.f(q(i), s);
    const double lm = 0.5 * (cc + std::sqrt(cc * cc + km2));
    const double mp = 0.5 * (-cc + std::sqrt(cc * cc + kp2));
    R(0) = fd::apply(fd::d1_stencil(0, n, h), q) - lm * (q(0) - hr.h_plus);
    R(n - 1) = fd::apply(fd::d1_stencil(n - 1, n, h), q) + mp * (q(n - 1) - hr.h_minus);
    double ph = 0.0;
    for (int a = 0; a < 6; ++a) ph += phase_w[a] * q(phase_start + a);
    R(n) = ph - hr.h_zero;
    return R;
  };

  Eigen::VectorXd R = residual(Q, c);
  double res = R.lpNorm<Eigen::Infinity>();
  int it = 0;
  bool converged = res <= opt.tol;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  std::vector<Eigen::Triplet<double>> trip;
  while (!converged && it < opt.max_iter) {
    ++it;
    trip.clear();
    trip.reserve(static_cast<std::size_t>(n) * 12);
    for (int i = 1; i < n - 1; ++i) {
      fd::add_stencil(trip, i, fd::d2_stencil(i, n, h), 1.0);
      auto s1 = fd::d1_stencil(i, n, h);
      fd::add_stencil(trip, i, s1, -c);
      trip.emplace_back(i, i, r.partial(1, 0, Q(i), s));
      trip.emplace_back(i, n, -fd::apply(s1, Q));
    }
    const double sm = std::sqrt(c * c + km2);
    const double sp = std::sqrt(c * c + kp2);
    const double lm = 0.5 * (c + sm);
    const double mp = 0.5 * (-c + sp);
    fd::add_stencil(trip, 0, fd::d1_stencil(0, n, h), 1.0);
    trip.emplace_back(0, 0, -lm);
    trip.emplace_back(0, n, -0.5 * (1.0 + c / sm) * (Q(0) - hr.h_plus));
    fd::add_stencil(trip, n - 1, fd::d1_stencil(n - 1, n, h), 1.0);
    trip.emplace_back(n - 1, n - 1, mp);
    trip.emplace_back(n - 1, n, 0.5 * (-1.0 + c / sp) * (Q(n - 1) - hr.h_minus));
    for (int a = 0; a < 6; ++a) trip.emplace_back(n, phase_start + a, phase_w[a]);
    Eigen::SparseMatrix<double> J(n + 1, n + 1);
    J.setFromTriplets(trip.begin(), trip.end());
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw Error(ErrorCode::NoConvergence, "wave Jacobian factorization failed");
    const Eigen::VectorXd delta = lu.solve(-R);
    const double qscale = 1.0 + Q.abs().maxCoeff();
    // Rounding floor of the discrete residual.
    const double floor = 100.0 * std::numeric_limits<double>::epsilon() * qscale / (h * h);
    if (delta.lpNorm<Eigen::Infinity>() <= opt.step_tol * qscale) {
      Q += delta.head(n).array();
      c += delta(n);
      R = residual(Q, c);
      res = R.lpNorm<Eigen::Infinity>();
      converged = true;
      break;
    }
    double step = 1.0;
    Eigen::ArrayXd Qn;
    double cn = c;
    Eigen::VectorXd Rn;
    bool decreased = false;
    for (int ls = 0; ls < 30; ++ls) {
      Qn = Q + step * delta.head(n).array();
      cn = c + step * delta(n);
      Rn = residual(Qn, cn);
      if (Rn.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * step) * res) {
        decreased = true;
        break;
      }
      if (step < 1e-3) break;
      step *= 0.5;
    }
    if (!decreased && res <= floor) {
      converged = true;
      break;
    }
    Q = Qn;
    c = cn;
    R = Rn;
    res = R.lpNorm<Eigen::Infinity>();
    converged = res <= opt.tol;
  }
  if (!converged)
    throw Error(ErrorCode::NoConvergence, "wave Newton did not converge in " + std::to_string(opt.max_iter) +
                                              " iterations (residual " + sci(res) + ")");
  P.Q = Q;
  P.c = c;
  P.iterations = it;
  P.newton_residual = res;
  P.Qz = fd::d1(Q, h);
  P.Qzz = fd::d2(Q, h);
  double ode = 0.0;
  for (int i = 1; i < n - 1; ++i) ode = std::max(ode, std::abs(P.Qzz(i) - c * P.Qz(i) + r.f(Q(i), s)));
  P.ode_residual = ode;
  P.phase_error = std::abs(P.value_at(Q, 0.0) - hr.h_zero);
  P.tail_deviation = std::max(std::abs(Q(0) - hr.h_plus), std::abs(Q(n - 1) - hr.h_minus));
  P.m = wave_mass(P);
  P.m_tail = P.Qz(0) * P.Qz(0) / (2.0 * P.kappa_minus) + P.Qz(n - 1) * P.Qz(n - 1) / (2.0 * P.kappa_plus);
  if (P.tail_deviation > 1e-6)
    throw Error(ErrorCode::DomainTooSmall, "|Q(+-Z) - h| = " + sci(P.tail_deviation));
  return P;
}

struct SpeedIdentity {
  double c;
  double rhs;
  double abs_err;
  double rel_err;
};

inline SpeedIdentity check_speed_identity(const EquilibriumStructure& eq, double s, const WaveOptions& opt = {}) {
  const WaveProfile p = solve_profile(eq, s, opt);
  const double rhs = -balance_integral(eq.reaction, s) / p.m;
  const double err = std::abs(p.c - rhs);
  return {p.c, rhs, err, err / std::max({std::abs(p.c), std::abs(rhs), 1e-300})};
}

}  // namespace mcrd
