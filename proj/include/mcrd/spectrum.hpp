#pragma once

#include "mcrd/profile.hpp"
#include "mcrd/solve.hpp"
#include "mcrd/tridiag.hpp"

#include <boost/math/tools/roots.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

namespace mcrd {

struct LimitConstants {
  double E = 0.0, G = 0.0;
  double mu_hat = 0.0, lambda_star = 0.0, Lambda_star = 0.0;
  double fu_in = 0.0, fu_out = 0.0, fv_in = 0.0, fv_out = 0.0;
};

// E, G, lambda_*, Lambda^*; "in" is the branch occupying the inner ball (h^+ unless mirrored).
// mu_star is the spectral gap below mu_0 (only enters mu_hat; pass +inf if unknown).
inline LimitConstants limit_constants(const EquilibriumStructure& eq, double M, int N, double m, bool mirrored = false,
                                      double mu_star = std::numeric_limits<double>::infinity()) {
  const double R = interface_radius(eq, M, N, mirrored);
  const double RN = std::pow(R, N);
  const double h_in = mirrored ? eq.h.h_minus : eq.h.h_plus;
  const double h_out = mirrored ? eq.h.h_plus : eq.h.h_minus;
  const auto& r = eq.reaction;
  LimitConstants c;
  c.fu_in = r.partial(1, 0, h_in, eq.v_star);
  c.fu_out = r.partial(1, 0, h_out, eq.v_star);
  c.fv_in = r.partial(0, 1, h_in, eq.v_star);
  c.fv_out = r.partial(0, 1, h_out, eq.v_star);
  c.E = c.fu_in + c.fu_out - RN * c.fv_in - (1.0 - RN) * c.fv_out;
  c.G = c.fu_out * c.fu_in - RN * c.fu_out * c.fv_in - (1.0 - RN) * c.fu_in * c.fv_out;
  c.mu_hat = 0.5 * std::min({mu_star, -c.fu_in, -c.fu_out});
  const std::complex<double> disc = std::sqrt(std::complex<double>(c.E * c.E - 4.0 * c.G, 0.0));
  c.lambda_star = std::min(c.mu_hat, -(c.E + disc).real() / 4.0);
  const double jump = eq.h.h_plus - eq.h.h_minus;
  c.Lambda_star = -(N * std::pow(R, N - 1) * jump / m) * (c.fu_out * c.fu_in / c.G) * eq.J_prime_star;
  return c;
}

// Local operator eps^2 lap + f_u - (eps/D) f_v and rank-one data frozen at an assembled state.
struct LinearizedState {
  const RadialGrid* grid = nullptr;
  double eps = 0.0, D = 1.0;
  Eigen::ArrayXd lo, di, up;  // L as a (nonsymmetric) tridiagonal matrix
  Eigen::ArrayXd sd, so;      // symmetric form V^{1/2} L V^{-1/2}: diagonal, off-diagonal (size n-1)
  Eigen::ArrayXd c, w;        // nonlocal part c w^T
  Eigen::ArrayXd vol;         // L^2(Omega) weights N |Omega| V_i
};

inline LinearizedState linearize_state(const RadialGrid& G, const Eigen::ArrayXd& u, const Eigen::ArrayXd& v,
                                       const BistableReaction& r, double eps, double D) {
  LinearizedState L;
  L.grid = &G;
  L.eps = eps;
  L.D = D;
  const int n = G.n();
  G.laplacian_bands(L.lo, L.di, L.up);
  L.lo *= eps * eps;
  L.di *= eps * eps;
  L.up *= eps * eps;
  L.c.resize(n);
  for (int i = 0; i < n; ++i) {
    const double fu = r.partial(1, 0, u(i), v(i)), fv = r.partial(0, 1, u(i), v(i));
    L.di(i) += fu - eps / D * fv;
    L.c(i) = -(1.0 - eps / D) * fv;
  }
  L.w = G.mean_w;
  L.sd = L.di;
  L.so.resize(n - 1);
  for (int i = 0; i + 1 < n; ++i) L.so(i) = eps * eps * G.flux(i) / std::sqrt(G.vol(i) * G.vol(i + 1));
  L.vol = G.N * G.omega * G.vol;
  return L;
}

inline LinearizedState linearize_state(const ApproximateSolution& s, const BistableReaction& r) {
  return linearize_state(s.grid, s.u, s.v, r, s.eps, s.D);
}

namespace spectrum_detail {

// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
inline int sturm_count(const Eigen::ArrayXd& d, const Eigen::ArrayXd& e, double x) {
  int count = 0;
  double q = d(0) - x;
  if (q < 0) ++count;
  for (Eigen::Index i = 1; i < d.size(); ++i) {
    if (q == 0.0) q = std::numeric_limits<double>::epsilon() * (std::abs(e(i - 1)) + 1e-300);
    q = d(i) - x - e(i - 1) * e(i - 1) / q;
    if (q < 0) ++count;
  }
  return count;
}

// The index-th eigenvalue from the top (0 = largest) as a bracket [lo, hi].
inline std::pair<double, double> bisect_eigenvalue(const Eigen::ArrayXd& d, const Eigen::ArrayXd& e, int index) {
  const int n = static_cast<int>(d.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < n; ++i) {
    const double rad = (i > 0 ? std::abs(e(i - 1)) : 0.0) + (i + 1 < n ? std::abs(e(i)) : 0.0);
    lo = std::min(lo, d(i) - rad);
    hi = std::max(hi, d(i) + rad);
  }
  const double scale = std::max(std::abs(lo), std::abs(hi));
  // Want x with count(x) <= n-1-index < count(x') ... i.e. eigenvalue number n-1-index from below.
  const int k = n - 1 - index;
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * scale; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count(d, e, mid) > k)
      hi = mid;
    else
      lo = mid;
  }
  return {lo, hi};
}

}  // namespace spectrum_detail

struct LocalEigen {
  double mu0 = 0.0;
  double mu1_lo = 0.0, mu1_hi = 0.0;  // bracket of the second eigenvalue; mu1_hi is the certified bound
  Eigen::ArrayXd phi0;                // positive, unit L^2(Omega) norm
  int sweeps = 0;
  double residual = 0.0;              // max |L phi - mu0 phi| relative to |mu0| + ||L||
};

inline LocalEigen local_principal_eigenpair(const LinearizedState& L) {
  const int n = static_cast<int>(L.sd.size());
  LocalEigen out;
  const auto b0 = spectrum_detail::bisect_eigenvalue(L.sd, L.so, 0);
  const auto b1 = spectrum_detail::bisect_eigenvalue(L.sd, L.so, 1);
  out.mu1_lo = b1.first;
  out.mu1_hi = b1.second;
  // Shifted inverse iteration on the symmetric form.
  const double gap = b0.first - b1.second;
  const double shift = b0.second + 1e-10 * std::max(1.0, std::abs(b0.second)) + 1e-6 * gap;
  Eigen::ArrayXd lo = Eigen::ArrayXd::Zero(n), up = Eigen::ArrayXd::Zero(n);
  for (int i = 0; i + 1 < n; ++i) {
    up(i) = L.so(i);
    lo(i + 1) = L.so(i);
  }
  const TridiagLU T(lo, L.sd - shift, up);
  Eigen::VectorXd y = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
  double mu = 0.5 * (b0.first + b0.second), prev = std::numeric_limits<double>::infinity();
  auto sym_apply = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r = (L.sd * x.array()).matrix();
    for (int i = 0; i + 1 < n; ++i) {
      r(i) += L.so(i) * x(i + 1);
      r(i + 1) += L.so(i) * x(i);
    }
    return r;
  };
  const double scale = L.sd.abs().maxCoeff() + 2.0 * L.so.abs().maxCoeff();
  bool locked = false;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd z = T.solve(y);
    z.normalize();
    if (z.dot(y) < 0) z = -z;
    const double step = (z - y).norm();
    y = z;
    mu = y.dot(sym_apply(y));
    out.sweeps = it + 1;
    if (it >= 2 && (step <= 1e-13 || std::abs(mu - prev) <= 16.0 * std::numeric_limits<double>::epsilon() * scale)) {
      locked = true;
      break;
    }
    prev = mu;
  }
  if (!locked) throw Error(ErrorCode::IterationStall, "inverse iteration did not lock in 200 sweeps");
  out.mu0 = mu;
  out.residual = (sym_apply(y) - mu * y).cwiseAbs().maxCoeff() / (std::abs(mu) + scale);
  const Eigen::ArrayXd sv = L.grid->vol.sqrt();
  Eigen::ArrayXd phi = y.array() / sv;
  if (phi.sum() < 0) phi = -phi;
  phi /= std::sqrt((L.vol * phi.square()).sum());
  out.phi0 = phi;
  return out;
}

inline Eigen::VectorXd solve_shifted(const LinearizedState& L, double lambda, const Eigen::VectorXd& rhs) {
  const TridiagLU T(L.lo, L.di - lambda, L.up);
  return T.solve(rhs);
}

// 1 + w^T (L - lambda)^{-1} c.
inline double secular_function(const LinearizedState& L, double lambda) {
  return 1.0 + L.w.matrix().dot(solve_shifted(L, lambda, L.c.matrix()));
}

// Adjoint in L^2(Omega): 1 + (V c)^T (L - lambda)^{-1} (w / V).
inline double adjoint_secular_function(const LinearizedState& L, double lambda) {
  const Eigen::VectorXd b = (L.w / L.vol).matrix();
  return 1.0 + (L.vol * L.c).matrix().dot(solve_shifted(L, lambda, b));
}

struct SecularRoot {
  double lambda = 0.0;
  int sign_changes = 0;
  double window_lo = 0.0, window_hi = 0.0;
};

template <class Fn>
SecularRoot find_secular_root(Fn&& g, double mu0, double lo, double hi, double pole_gap) {
  SecularRoot out;
  out.window_lo = lo;
  out.window_hi = hi;
  const double tiny = pole_gap;  // mu0 is only known to about eps_mach ||L||
  std::vector<std::pair<double, double>> brackets;
  auto scan = [&](double a, double b, bool toward_a_geometric) {
    // Points clustered at the pole end mu0, plus a uniform layer.
    std::vector<double> x;
    const int m = 400;
    const double len = b - a;
    if (len <= 0) return;
    for (int i = 0; i <= m; ++i) x.push_back(a + len * i / m);
    for (int i = 0; i <= 200; ++i) {
      const double d = tiny * std::pow(len / tiny, static_cast<double>(i) / 200);
      x.push_back(toward_a_geometric ? b - d : a + d);
    }
    std::sort(x.begin(), x.end());
    x.erase(std::unique(x.begin(), x.end()), x.end());
    double px = x.front(), pg = g(px);
    for (std::size_t i = 1; i < x.size(); ++i) {
      const double gx = g(x[i]);
      if ((pg < 0) != (gx < 0)) brackets.emplace_back(px, x[i]);
      px = x[i];
      pg = gx;
    }
  };
  scan(lo, mu0 - tiny, true);
  scan(mu0 + tiny, hi, false);
  out.sign_changes = static_cast<int>(brackets.size());
  if (brackets.empty()) throw Error(ErrorCode::NoRootInWindow, "secular function has no sign change in the window");
  if (brackets.size() > 1)
    throw Error(ErrorCode::MultipleRoots, std::to_string(brackets.size()) + " sign changes in the window");
  boost::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      [&](double x) { return g(x); }, brackets[0].first, brackets[0].second,
      [](double x, double y) { return std::abs(x - y) <= 4e-16 * std::max(std::abs(x), 1e-300); }, iters);
  out.lambda = 0.5 * (a + b);
  return out;
}

struct FixedPointResult {
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Cross-check for the secular root: split off the principal mode,
//   lambda = mu0 + (w.phi0)<phi0, c> / (1 + w^T (L - lambda)^{-1} (c - phi0 <phi0, c>)),
// and iterate from lambda_init. Converges when the reduced resolvent varies slowly near the root.
inline FixedPointResult projected_fixed_point(const LinearizedState& L, const LocalEigen& le, double lambda_init,
                                              int max_iter = 100, double tol = 1e-13) {
  const double pc = (L.vol * le.phi0 * L.c).sum();
  const double wp = (L.w * le.phi0).sum();
  const Eigen::VectorXd c_perp = (L.c - pc * le.phi0).matrix();
  FixedPointResult out;
  double lam = lambda_init;
  for (int it = 0; it < max_iter; ++it) {
    const double denom = 1.0 + L.w.matrix().dot(solve_shifted(L, lam, c_perp));
    const double next = le.mu0 + wp * pc / denom;
    out.iterations = it + 1;
    if (std::abs(next - lam) <= tol * (1.0 + std::abs(next))) {
      out.lambda = next;
      out.converged = true;
      return out;
    }
    lam = next;
  }
  out.lambda = lam;
  return out;
}

struct SpectralReport {
  double eps = 0.0;
  double mu0 = 0.0;
  Eigen::ArrayXd phi0;
  double next_eig_bound = 0.0;
  double lambda0 = 0.0, lambda0_adjoint = 0.0;
  double pairing = 0.0;
  int sign_changes = 0;
  LimitConstants limits;
  double ratio = 0.0;  // lambda0 / eps
  std::optional<double> dense_lambda;
  int dense_in_window = 0;
};

struct SpectrumOptions {
  bool dense_check = true;  // when n <= dense_max
  int dense_max = 400;
};

inline SpectralReport analyze_spectrum(const ApproximateSolution& s, const ExpansionData& e,
                                       const SpectrumOptions& opt = {}) {
  const auto& r = e.eq.reaction;
  const LinearizedState L = linearize_state(s, r);
  SpectralReport rep;
  rep.eps = s.eps;
  const LocalEigen le = local_principal_eigenpair(L);
  rep.mu0 = le.mu0;
  rep.phi0 = le.phi0;
  rep.next_eig_bound = le.mu1_hi;
  rep.limits = limit_constants(e.eq, e.M, e.N, wave_mass(e.profile), e.mirrored, -le.mu1_hi);
  const double lo = std::max(le.mu1_hi, -rep.limits.lambda_star);
  double hi = 0.0;
  for (Eigen::Index i = 0; i < L.di.size(); ++i)
    hi = std::max(hi, L.di(i) + std::abs(L.lo(i)) + std::abs(L.up(i)) + std::abs(L.c(i)) * L.w.abs().sum());
  hi = std::max(hi, le.mu0 + 1.0);
  const double gap = 1e-10 * std::max(1.0, L.sd.abs().maxCoeff() + 2.0 * L.so.abs().maxCoeff());
  if (std::abs(1.0 - s.eps / s.D) == 0.0) {
    rep.lambda0 = rep.lambda0_adjoint = le.mu0;
    rep.sign_changes = 1;
  } else {
    const auto root = find_secular_root([&](double x) { return secular_function(L, x); }, le.mu0, lo, hi, gap);
    const auto aroot = find_secular_root([&](double x) { return adjoint_secular_function(L, x); }, le.mu0, lo, hi, gap);
    rep.lambda0 = root.lambda;
    rep.lambda0_adjoint = aroot.lambda;
    rep.sign_changes = root.sign_changes;
    // Eigenfunctions (L - lambda)^{-1} c and (L - lambda)^{-1} (w/V), unit normalized.
    Eigen::ArrayXd P = solve_shifted(L, rep.lambda0, L.c.matrix()).array();
    Eigen::ArrayXd Ph = solve_shifted(L, rep.lambda0_adjoint, (L.w / L.vol).matrix()).array();
    P /= std::sqrt((L.vol * P.square()).sum());
    Ph /= std::sqrt((L.vol * Ph.square()).sum());
    rep.pairing = std::abs((L.vol * P * Ph).sum());
  }
  rep.ratio = rep.lambda0 / s.eps;
  if (opt.dense_check && s.grid.n() <= opt.dense_max) {
    DiscreteOperator op{L.lo, L.di, L.up, L.c, L.w};
    Eigen::EigenSolver<Eigen::MatrixXd> es(op.dense(), false);
    double best = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const auto z = es.eigenvalues()(i);
      if (z.real() > -rep.limits.lambda_star) {
        ++rep.dense_in_window;
        if (std::isnan(best) || std::abs(z.real() - rep.lambda0) < std::abs(best - rep.lambda0)) best = z.real();
        if (std::abs(z.imag()) > 1e-10) rep.dense_lambda = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (!rep.dense_lambda) rep.dense_lambda = best;
  }
  return rep;
}

struct DecayReport {
  double rate_inner = 0.0, rate_outer = 0.0;  // decay per unit z on each side
  double flat_mass = 0.0;                     // share of ||phi||^2 with |r - R*| > 10 eps
  double l1 = 0.0;
};

inline DecayReport eigenfunction_decay(const Eigen::ArrayXd& phi, const ApproximateSolution& s, double z_lo = 3.0,
                                       double z_hi = 12.0) {
  const auto& G = s.grid;
  const Eigen::ArrayXd vol = G.N * G.omega * G.vol;
  DecayReport rep;
  auto fit = [&](int side) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (int i = 0; i < G.n(); ++i) {
      const double z = side * (G.r(i) - s.R_star) / s.eps;
      if (z < z_lo || z > z_hi || !(std::abs(phi(i)) > 0)) continue;
      const double ly = std::log(std::abs(phi(i)));
      sx += z;
      sy += ly;
      sxx += z * z;
      sxy += z * ly;
      n += 1;
    }
    if (n < 3) return std::numeric_limits<double>::quiet_NaN();
    return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  rep.rate_outer = fit(+1);
  rep.rate_inner = fit(-1);
  const double total = (vol * phi.square()).sum();
  double flat = 0.0;
  for (int i = 0; i < G.n(); ++i)
    if (std::abs(G.r(i) - s.R_star) > 10.0 * s.eps) flat += vol(i) * phi(i) * phi(i);
  rep.flat_mass = flat / total;
  rep.l1 = (vol * phi.abs()).sum();
  return rep;
}

// max_{|z| <= zmax} |sqrt(eps) phi(R* + eps z) - ref(z)| / max |ref|, ref = -w0_z sqrt(R*^{1-N} / (N |Omega| m)).
inline double eigenfunction_profile_error(const Eigen::ArrayXd& phi, const ApproximateSolution& s,
                                          const ExpansionData& e, double zmax = 5.0) {
  const auto& G = s.grid;
  const double m = wave_mass(e.profile);
  const double amp = std::sqrt(std::pow(s.R_star, 1 - s.N) / (s.N * G.omega * m));
  double err = 0.0, ref_max = 0.0;
  for (int i = 0; i < G.n(); ++i) {
    const double z = (G.r(i) - s.R_star) / s.eps;
    if (std::abs(z) > zmax) continue;
    const double ref = -e.inner_eval(0, z).wz * amp;
    err = std::max(err, std::abs(std::sqrt(s.eps) * phi(i) - ref));
    ref_max = std::max(ref_max, std::abs(ref));
  }
  return err / ref_max;
}

}  // namespace mcrd
