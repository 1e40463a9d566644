#pragma once

#include "mcrd/error.hpp"
#include "mcrd/fd.hpp"
#include "mcrd/jet.hpp"
#include "mcrd/quadrature.hpp"
#include "mcrd/reaction.hpp"
#include "mcrd/wave.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace mcrd {

struct L0Result {
  Eigen::ArrayXd phi;
  double sigma = 0.0;      // bordering multiplier, ~0 for solvable data
  double alpha = 0.0;      // removed kernel component
  double roundtrip = 0.0;  // max |L0 phi - g| on interior nodes
  double inner = 0.0;      // <phi, Q_z> after orthogonalization
  double limit_lo = 0.0, limit_hi = 0.0;
};

// L0 phi = phi'' + f_u(Q, s) phi on the wave grid with Robin far-field rows, bordered by the kernel.
// The kernel and the solvability functional are taken from the discrete operator itself, so that
// solvable data is solvable to rounding and the translation mode is annihilated exactly.
class L0Solver {
 public:
  using SpMat = Eigen::SparseMatrix<double>;
  using Lu = Eigen::SparseLU<SpMat>;

  // Keeps its own copy of the profile, so it outlives the caller's.
  L0Solver(const WaveProfile& profile, const BistableReaction& r)
      : own_(std::make_shared<const WaveProfile>(profile)), P_(own_.get()) {
    const WaveProfile& p = *own_;
    const int n = p.n;
    fu_.resize(n);
    for (int i = 0; i < n; ++i) fu_(i) = r.partial(1, 0, p.Q(i), p.s);
    w_ = p.trapezoid();
    fu_lo_ = r.partial(1, 0, p.h_plus, p.s);
    fu_hi_ = r.partial(1, 0, p.h_minus, p.s);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(n) * 8);
    for (int i = 1; i < n - 1; ++i) {
      fd::add_stencil(t, i, fd::d2_stencil(i, n, p.h), 1.0);
      t.emplace_back(i, i, fu_(i));
    }
    fd::add_stencil(t, 0, fd::d1_stencil(0, n, p.h), 1.0);
    t.emplace_back(0, 0, -p.kappa_minus);
    fd::add_stencil(t, n - 1, fd::d1_stencil(n - 1, n, p.h), 1.0);
    t.emplace_back(n - 1, n - 1, p.kappa_plus);
    A0_.resize(n, n);
    A0_.setFromTriplets(t.begin(), t.end());

    const Eigen::VectorXd qz = p.Qz.matrix();
    const Eigen::VectorXd wq = (w_ * p.Qz).matrix();
    lu_ = factor(A0_, qz, wq);
    // Right kernel: Q_z minus its discrete defect.
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = A0_ * qz;
    rhs(n) = 0.0;
    const Eigen::VectorXd d = lu_->solve(rhs);
    psi_ = (qz - d.head(n)).array();
    // Scale so that the moment quadrature (with exponential tails) carries exactly the front jump.
    const double carried = (w_ * psi_).sum() + psi_(0) / p.kappa_minus + psi_(n - 1) / p.kappa_plus;
    psi_ *= (p.h_minus - p.h_plus) / carried;
    // Left kernel, scaled to match the weighted Q_z.
    const SpMat A0t = A0_.transpose();
    const auto lut = factor(A0t, wq, qz);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n + 1);
    e(n) = 1.0;
    ell_ = lut->solve(e).head(n).array() * qz.dot(wq);
  }

  const WaveProfile& profile() const { return *P_; }
  // Discrete translation mode, equal to Q_z up to truncation error.
  const Eigen::ArrayXd& kernel() const { return psi_; }
  const Eigen::ArrayXd& left_kernel() const { return ell_; }
  const Eigen::ArrayXd& weights() const { return w_; }
  const Eigen::ArrayXd& fu() const { return fu_; }
  double inner(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) const { return (w_ * a * b).sum(); }
  double norm(const Eigen::ArrayXd& a) const { return std::sqrt(inner(a, a)); }

  Eigen::ArrayXd apply(const Eigen::ArrayXd& phi) const { return fd::d2(phi, P_->h) + fu_ * phi; }

  double solvability_defect(const Eigen::ArrayXd& g) const {
    return std::abs(inner(g, P_->Qz)) / (norm(g) * norm(P_->Qz) + 1e-300);
  }

  // Discrete counterpart of <g, w0_z>: pairs the full right-hand side, far-field rows included,
  // with the left kernel.
  double pairing(const Eigen::ArrayXd& g) const { return ell_.matrix().dot(rhs_of(g, g(0), g(P_->n - 1))); }

  // Solution of L0 phi = g orthogonal to the kernel with limits g_lo/f_u(h^+), g_hi/f_u(h^-).
  L0Result solve(const Eigen::ArrayXd& g, double g_lo, double g_hi, double tol_solv = 1e-8) const {
    const int n = P_->n;
    if (solvability_defect(g) > tol_solv)
      throw Error(ErrorCode::SolvabilityViolation, "<g, w0_z> relative defect " + sci(solvability_defect(g)));
    L0Result out;
    out.limit_lo = g_lo / fu_lo_;
    out.limit_hi = g_hi / fu_hi_;
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = rhs_of(g, g_lo, g_hi);
    rhs(n) = 0.0;
    const Eigen::VectorXd x = lu_->solve(rhs);
    out.phi = x.head(n).array();
    out.sigma = x(n);
    out.alpha = -inner(out.phi, psi_) / inner(psi_, psi_);
    out.phi += out.alpha * psi_;
    out.inner = inner(out.phi, psi_);
    const Eigen::ArrayXd Lphi = apply(out.phi);
    double rt = 0.0;
    for (int i = 1; i < n - 1; ++i) rt = std::max(rt, std::abs(Lphi(i) - g(i)));
    out.roundtrip = rt;
    return out;
  }

 private:
  static std::shared_ptr<Lu> factor(const SpMat& A, const Eigen::VectorXd& col, const Eigen::VectorXd& row) {
    const int n = static_cast<int>(A.rows());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(A.nonZeros()) + 2 * n);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n; ++i) {
      if (i > 0 && i < n - 1) t.emplace_back(i, n, col(i));
      t.emplace_back(n, i, row(i));
    }
    SpMat B(n + 1, n + 1);
    B.setFromTriplets(t.begin(), t.end());
    auto lu = std::make_shared<Lu>();
    lu->compute(B);
    if (lu->info() != Eigen::Success) throw Error(ErrorCode::SingularJacobian, "L0 bordered factorization failed");
    return lu;
  }

  Eigen::VectorXd rhs_of(const Eigen::ArrayXd& g, double g_lo, double g_hi) const {
    const int n = P_->n;
    Eigen::VectorXd r = g.matrix();
    r(0) = -P_->kappa_minus * g_lo / fu_lo_;
    r(n - 1) = P_->kappa_plus * g_hi / fu_hi_;
    return r;
  }

  std::shared_ptr<const WaveProfile> own_;
  const WaveProfile* P_;
  Eigen::ArrayXd fu_, w_, psi_, ell_;
  double fu_lo_ = 0.0, fu_hi_ = 0.0;
  SpMat A0_;
  std::shared_ptr<Lu> lu_;
};

inline L0Result l0_solve(const WaveProfile& p, const BistableReaction& r, const Eigen::ArrayXd& g, double g_lo,
                         double g_hi) {
  return L0Solver(p, r).solve(g, g_lo, g_hi);
}

struct InnerValue {
  double w = 0.0, wz = 0.0, wzz = 0.0;
};

struct ExpansionOptions {
  bool mirrored = false;
  double independence_tol = 1e-7;
  double solvability_tol = 1e-8;
  double b_residual_tol = 1e-10;
};

// Coefficients of the matched expansion. Inner functions are stored on the wave grid in the
// profile coordinate zeta = sigma (z + a_0), so that w^0(z) = Q(zeta).
struct ExpansionData {
  EquilibriumStructure eq;
  WaveProfile profile;
  double M = 0.0, D = 1.0;
  int N = 1, k = 0;
  bool mirrored = false;
  double sigma = 1.0;
  double R_star = 0.0, r0 = 0.0;
  std::vector<double> A;                  // A_0..A_{k+1}
  std::vector<double> a;                  // a_0..a_k
  std::vector<double> U_minus, U_plus;    // inside / outside outer constants, 0..k
  std::vector<Eigen::ArrayXd> w_hat;      // hat w^j on the grid; index 0 holds Q
  std::vector<Eigen::ArrayXd> w_hat_z;
  std::vector<Eigen::ArrayXd> forcing;    // f_j (final), index 0 unused
  std::vector<Eigen::ArrayXd> w, wz, wzz;  // finalized w^j and zeta-derivatives
  Eigen::MatrixXd K;                      // K_j^m, (k+1) x N
  std::vector<double> J_tail;             // J_0..J_k
  double J_prime_quad = 0.0;              // discrete -<f_v(Q), Q_z>
  Eigen::ArrayXd Qzz;                     // c Q_z - f(Q)

  // Diagnostics per stage.
  std::vector<double> independence_delta, solvability_residual, B_residual;
  std::vector<double> inner_residual, orthogonality, roundtrip, tail_error_lo, tail_error_hi;
  std::shared_ptr<L0Solver> l0;

  double jump0() const { return U_plus.at(0) - U_minus.at(0); }
  double U_bar(int j) const {
    const double RN = std::pow(R_star, N);
    return U_minus.at(j) * RN + U_plus.at(j) * (1.0 - RN);
  }
  // Outer constant on the zeta<zeta_c / zeta>zeta_c side.
  double left_limit(int j) const { return sigma > 0 ? U_minus.at(j) : U_plus.at(j); }
  double right_limit(int j) const { return sigma > 0 ? U_plus.at(j) : U_minus.at(j); }

  // w^j(z) and its z-derivatives; constant outer limits beyond the grid.
  InnerValue inner_eval(int j, double z) const {
    const double zeta = sigma * (z + a.at(0));
    const auto& P = profile;
    if (zeta <= P.z(0)) return {left_limit(j), 0.0, 0.0};
    if (zeta >= P.z(P.n - 1)) return {right_limit(j), 0.0, 0.0};
    int i = static_cast<int>((zeta - P.z(0)) / P.h);
    i = std::max(0, std::min(P.n - 2, i));
    const double h = P.h;
    const double t = (zeta - P.z(i)) / h;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double H[6] = {1 - 10 * t3 + 15 * t4 - 6 * t5, t - 6 * t3 + 8 * t4 - 3 * t5,
                         0.5 * (t2 - 3 * t3 + 3 * t4 - t5), 10 * t3 - 15 * t4 + 6 * t5,
                         -4 * t3 + 7 * t4 - 3 * t5, 0.5 * (t3 - 2 * t4 + t5)};
    const double dH[6] = {-30 * t2 + 60 * t3 - 30 * t4, 1 - 18 * t2 + 32 * t3 - 15 * t4,
                          0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4), 30 * t2 - 60 * t3 + 30 * t4,
                          -12 * t2 + 28 * t3 - 15 * t4, 0.5 * (3 * t2 - 8 * t3 + 5 * t4)};
    const double ddH[6] = {-60 * t + 180 * t2 - 120 * t3, -36 * t + 96 * t2 - 60 * t3,
                           0.5 * (2 - 18 * t + 36 * t2 - 20 * t3), 60 * t - 180 * t2 + 120 * t3,
                           -24 * t + 84 * t2 - 60 * t3, 0.5 * (6 * t - 24 * t2 + 20 * t3)};
    const double y[6] = {w[j](i), h * wz[j](i), h * h * wzz[j](i), w[j](i + 1), h * wz[j](i + 1),
                         h * h * wzz[j](i + 1)};
    InnerValue v;
    for (int b = 0; b < 6; ++b) {
      v.w += y[b] * H[b];
      v.wz += y[b] * dH[b];
      v.wzz += y[b] * ddH[b];
    }
    v.wz *= sigma / h;
    v.wzz /= h * h;
    return v;
  }

  // Sum_j eps^j U^{-/+,j}.
  double outer_sum(double eps, bool inside) const {
    double s = 0.0, e = 1.0;
    for (int j = 0; j <= k; ++j) {
      s += e * (inside ? U_minus[j] : U_plus[j]);
      e *= eps;
    }
    return s;
  }
};

namespace expansion_detail {

// Int x^m (s(x) - H(x)) dx for s(x) = (1 + tanh x)/2.
inline double sigmoid_moment(int m) {
  if (m % 2 == 0) return 0.0;
  double fact = 1.0;
  for (int i = 2; i <= m; ++i) fact *= i;
  const double s = m + 1.0;
  const double eta = (1.0 - std::pow(2.0, 1.0 - s)) * std::riemann_zeta(s);
  return -2.0 * fact * eta / std::pow(2.0, s);
}

inline double binom(int n, int m) {
  double r = 1.0;
  for (int i = 1; i <= m; ++i) r = r * (n - m + i) / i;
  return r;
}

}  // namespace expansion_detail

// Int (sigma zeta - a0)^m (W(zeta) - step) dzeta, step at zeta_c = sigma a0 from L to Rv.
inline double step_moment(const ExpansionData& e, const Eigen::ArrayXd& W, double L, double Rv, int m, double a0) {
  const auto& P = e.profile;
  const double zc = e.sigma * a0;
  const Eigen::ArrayXd x = P.z - zc;
  const Eigen::ArrayXd S = L + (Rv - L) * 0.5 * (1.0 + x.tanh());
  const Eigen::ArrayXd pw = (e.sigma * x).pow(m);
  const double sm = (m % 2 == 0) ? 1.0 : e.sigma;
  double tails = 0.0;
  // Exponential tails beyond the grid, at the linearized far-field rates.
  const double kl = P.kappa_minus, kr = P.kappa_plus;
  const double dl = W(0) - L, dr = W(P.n - 1) - Rv;
  const double pl = e.sigma * P.z(0) - a0, pr = e.sigma * P.z(P.n - 1) - a0;
  double fact = 1.0;
  for (int i = 0; i <= m; ++i) {
    if (i > 0) fact *= i;
    const double c = expansion_detail::binom(m, i) * fact;
    tails += dl * c * std::pow(pl, m - i) * std::pow(-e.sigma, i) / std::pow(kl, i + 1);
    tails += dr * c * std::pow(pr, m - i) * std::pow(e.sigma, i) / std::pow(kr, i + 1);
  }
  return (P.trapezoid() * pw * (W - S)).sum() + tails + sm * (Rv - L) * expansion_detail::sigmoid_moment(m);
}

namespace expansion_detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::StageOrderViolation, what);
}

// w^i on the grid, with a_i optionally overridden.
inline Eigen::ArrayXd W_of(const ExpansionData& e, int i, std::optional<double> a_i) {
  if (i == 0) return e.profile.Q;
  const double ai = a_i ? *a_i : e.a.at(i);
  return ai * e.sigma * e.l0->kernel() + e.w_hat.at(i);
}
inline Eigen::ArrayXd Wz_of(const ExpansionData& e, int i, std::optional<double> a_i) {
  if (i == 0) return e.profile.Qz;
  const double ai = a_i ? *a_i : e.a.at(i);
  return ai * e.sigma * e.Qzz + e.w_hat_z.at(i);
}

}  // namespace expansion_detail

inline double interface_radius_raw(const EquilibriumStructure& eq, double M, int N, bool mirrored) {
  const double lo = eq.v_star + eq.h.h_minus;
  const double hi = eq.v_star + eq.h.h_plus;
  if (!(M > lo && M < hi))
    throw Error(ErrorCode::MassOutOfRange, "M must lie in (v*+h^-(v*), v*+h^+(v*))");
  const double frac = mirrored ? (eq.v_star + eq.h.h_plus - M) / (eq.h.h_plus - eq.h.h_minus)
                               : (M - eq.v_star - eq.h.h_minus) / (eq.h.h_plus - eq.h.h_minus);
  return std::pow(frac, 1.0 / N);
}

// f_j on the grid with A_j given and a_{j-1} optionally overridden.
inline Eigen::ArrayXd inner_forcing(const ExpansionData& e, int j, std::optional<double> a_prev, double A_j) {
  using expansion_detail::require;
  require(j >= 1, "inner forcing needs j >= 1");
  require(static_cast<int>(e.w_hat.size()) >= j, "hat w^{j-1} not available");
  require(static_cast<int>(e.A.size()) >= j, "A_0..A_{j-1} not available");
  require(a_prev.has_value() || static_cast<int>(e.a.size()) >= j, "a_{j-1} not available");
  require(static_cast<int>(e.a.size()) >= j - 1, "a_0..a_{j-2} not finalized");
  const auto& P = e.profile;
  const int n = P.n;
  auto a_of = [&](int i) -> std::optional<double> {
    if (i == j - 1 && a_prev) return a_prev;
    return std::nullopt;
  };
  std::vector<Eigen::ArrayXd> Wi(j), Wzi(j);
  for (int i = 0; i < j; ++i) {
    Wi[i] = expansion_detail::W_of(e, i, i == 0 ? std::nullopt : a_of(i));
    Wzi[i] = expansion_detail::Wz_of(e, i, i == 0 ? std::nullopt : a_of(i));
  }
  EpsJet<Eigen::ArrayXd> u(std::vector<Eigen::ArrayXd>(j + 1, Eigen::ArrayXd::Zero(n)));
  EpsJet<Eigen::ArrayXd> v(std::vector<Eigen::ArrayXd>(j + 1, Eigen::ArrayXd::Zero(n)));
  for (int i = 0; i < j; ++i) u[i] = Wi[i];
  v[0] = Eigen::ArrayXd::Constant(n, e.A[0]);
  for (int i = 1; i <= j; ++i) v[i] = (i == j ? A_j : e.A[i]) - Wi[i - 1] / e.D;
  const auto fj = jet_compose_reaction(e.eq.reaction, u, v);
  Eigen::ArrayXd out = fj[j];
  if (e.N > 1) {
    const double a0 = (j - 1 == 0 && a_prev) ? *a_prev : (e.a.empty() ? 0.0 : e.a[0]);
    const Eigen::ArrayXd z = e.sigma * P.z - a0;
    Eigen::ArrayXd zk = Eigen::ArrayXd::Ones(n);
    double sgn = 1.0;
    double Rk = e.R_star;
    for (int kk = 0; kk <= j - 1; ++kk) {
      out += (e.N - 1) * sgn / Rk * zk * e.sigma * Wzi[j - 1 - kk];
      zk *= z;
      sgn = -sgn;
      Rk *= e.R_star;
    }
  }
  return out;
}

// A_j from <f_j, w0_z> = 0 with a_{j-1} = 0; independence checked against a_{j-1} = 1.
inline double solvability_A(ExpansionData& e, int j, const ExpansionOptions& opt = {}) {
  auto A_for = [&](double a_prev) { return e.l0->pairing(inner_forcing(e, j, a_prev, 0.0)) / e.J_prime_quad; };
  const double A0 = A_for(0.0);
  const double A1 = A_for(1.0);
  const double delta = std::abs(A1 - A0);
  if (static_cast<int>(e.independence_delta.size()) < j + 1) e.independence_delta.resize(j + 1, 0.0);
  e.independence_delta[j] = delta;
  if (delta > opt.independence_tol * (1.0 + std::abs(A0)))
    throw Error(ErrorCode::IndependenceViolation,
                "A_" + std::to_string(j) + " changes by " + sci(delta) + " with a_{j-1}");
  if (std::abs(e.J_prime_quad) <= 1e-8) throw Error(ErrorCode::DegenerateBalance, "J'(v*) vanishes");
  return A0;
}

// (U^{-,j}, U^{+,j}).
inline std::pair<double, double> outer_coeff(const ExpansionData& e, int j) {
  if (j == 0) return {e.U_minus.at(0), e.U_plus.at(0)};
  expansion_detail::require(static_cast<int>(e.A.size()) > j && static_cast<int>(e.U_minus.size()) >= j,
                            "outer coefficient prerequisites missing");
  const auto& r = e.eq.reaction;
  auto one = [&](const std::vector<double>& U) {
    EpsJet<double> u(std::vector<double>(j + 1, 0.0)), v(std::vector<double>(j + 1, 0.0));
    for (int i = 0; i < j; ++i) u[i] = U[i];
    v[0] = e.A[0];
    for (int i = 1; i < j; ++i) v[i] = e.A[i] - U[i - 1] / e.D;
    const double rest = jet_compose_reaction(r, u, v)[j];
    const double fu = r.partial(1, 0, U[0], e.A[0]);
    const double fv = r.partial(0, 1, U[0], e.A[0]);
    const double hv = -fv / fu;
    return hv * (e.A[j] - U[j - 1] / e.D) - rest / fu;
  };
  return {one(e.U_minus), one(e.U_plus)};
}

// K_j^m.
inline double layer_moment(const ExpansionData& e, int j, int m) {
  expansion_detail::require(static_cast<int>(e.w.size()) > j, "w^j not finalized");
  const double scale = e.N * expansion_detail::binom(e.N - 1, m) * std::pow(e.R_star, e.N - 1 - m);
  return scale * step_moment(e, e.w[j], e.left_limit(j), e.right_limit(j), m, e.a.at(0));
}

namespace expansion_detail {

// B_n without the K^0_{n-1} term.
inline double B_rest(const ExpansionData& e, int n) {
  double b = e.A.at(n) - e.U_bar(n - 1) / e.D;
  if (n <= e.k) b += e.U_bar(n);
  for (int m = 1; m < e.N; ++m)
    if (n - 1 - m >= 0) b += e.K(n - 1 - m, m);
  for (int m = 0; m < e.N; ++m)
    if (n - 2 - m >= 0) b -= e.K(n - 2 - m, m) / e.D;
  return b;
}

inline void finalize_w(ExpansionData& e, int i) {
  const auto& r = e.eq.reaction;
  const auto& P = e.profile;
  Eigen::ArrayXd W = W_of(e, i, std::nullopt);
  Eigen::ArrayXd Wz = Wz_of(e, i, std::nullopt);
  Eigen::ArrayXd Wzz(P.n);
  if (i == 0) {
    Wzz = e.Qzz;
  } else {
    for (int t = 0; t < P.n; ++t) Wzz(t) = -r.partial(1, 0, P.Q(t), P.s) * W(t) - e.forcing[i](t);
  }
  e.w.push_back(W);
  e.wz.push_back(Wz);
  e.wzz.push_back(Wzz);
  for (int m = 0; m < e.N; ++m) e.K(i, m) = layer_moment(e, i, m);
}

}  // namespace expansion_detail

// Solves B_j = 0 for a_{j-1}; stores a_{j-1} and J_{j-1}.
inline double mass_match_a(ExpansionData& e, int j, const ExpansionOptions& opt = {}) {
  expansion_detail::require(static_cast<int>(e.a.size()) == j - 1, "a_{j-1} already fixed or earlier a missing");
  const double jump = e.jump0();
  if (std::abs(jump) <= 1e-10) throw Error(ErrorCode::DegenerateJump, "h^+ - h^- vanishes");
  const double NR = e.N * std::pow(e.R_star, e.N - 1);
  double Jt;
  if (j - 1 == 0)
    Jt = step_moment(e, e.profile.Q, e.left_limit(0), e.right_limit(0), 0, 0.0);
  else
    Jt = step_moment(e, e.w_hat[j - 1], e.left_limit(j - 1), e.right_limit(j - 1), 0, e.a[0]);
  const double rest = expansion_detail::B_rest(e, j);
  const double a = -(rest + NR * Jt) / (NR * jump);
  e.a.push_back(a);
  e.J_tail.push_back(Jt);
  expansion_detail::finalize_w(e, j - 1);
  const double res = std::abs(rest + e.K(j - 1, 0));
  if (static_cast<int>(e.B_residual.size()) < j + 1) e.B_residual.resize(j + 1, 0.0);
  e.B_residual[j] = res;
  if (res > opt.b_residual_tol)
    throw Error(ErrorCode::NoConvergence, "B_" + std::to_string(j) + " residual " + sci(res));
  return a;
}

inline ExpansionData build_expansion(const EquilibriumStructure& eq, const WaveProfile& profile, double M, double D,
                                     int N, int k, const ExpansionOptions& opt = {}) {
  if (N < 1) throw Error(ErrorCode::InvalidArgument, "N must be >= 1");
  if (k < 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 0");
  if (!(D > 0.0)) throw Error(ErrorCode::InvalidArgument, "D must be positive");
  if (std::abs(profile.s - eq.v_star) > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "profile must be solved at s = v*");
  if (k + 1 > eq.reaction.max_derivative_order())
    throw Error(ErrorCode::OrderUnavailable, "expansion order needs reaction partials of order k+1");
  ExpansionData e;
  e.eq = eq;
  e.profile = profile;
  e.M = M;
  e.D = D;
  e.N = N;
  e.k = k;
  e.mirrored = opt.mirrored;
  e.sigma = opt.mirrored ? -1.0 : 1.0;
  e.R_star = interface_radius_raw(eq, M, N, opt.mirrored);
  e.r0 = 0.25 * std::min(e.R_star, 1.0 - e.R_star);
  const auto& r = eq.reaction;
  const auto& P = e.profile;
  e.Qzz.resize(P.n);
  for (int i = 0; i < P.n; ++i) e.Qzz(i) = P.c * P.Qz(i) - r.f(P.Q(i), P.s);
  e.l0 = std::make_shared<L0Solver>(e.profile, r);
  Eigen::ArrayXd fvQ(P.n);
  for (int i = 0; i < P.n; ++i) fvQ(i) = r.partial(0, 1, P.Q(i), P.s);
  e.J_prime_quad = -e.l0->pairing(fvQ);
  e.A = {eq.v_star};
  e.U_minus = {opt.mirrored ? eq.h.h_minus : eq.h.h_plus};
  e.U_plus = {opt.mirrored ? eq.h.h_plus : eq.h.h_minus};
  e.w_hat = {P.Q};
  e.w_hat_z = {P.Qz};
  e.forcing = {Eigen::ArrayXd()};
  e.K = Eigen::MatrixXd::Zero(k + 1, N);
  e.solvability_residual.assign(k + 2, 0.0);
  e.inner_residual.assign(k + 1, 0.0);
  e.orthogonality.assign(k + 1, 0.0);
  e.roundtrip.assign(k + 1, 0.0);
  e.tail_error_lo.assign(k + 1, 0.0);
  e.tail_error_hi.assign(k + 1, 0.0);
  e.tail_error_lo[0] = std::abs(P.Q(0) - e.left_limit(0));
  e.tail_error_hi[0] = std::abs(P.Q(P.n - 1) - e.right_limit(0));

  for (int j = 1; j <= k + 1; ++j) {
    const double Aj = solvability_A(e, j, opt);
    e.A.push_back(Aj);
    if (j <= k) {
      const auto [um, up] = outer_coeff(e, j);
      e.U_minus.push_back(um);
      e.U_plus.push_back(up);
    }
    mass_match_a(e, j, opt);
    const Eigen::ArrayXd fj = inner_forcing(e, j, std::nullopt, Aj);
    e.solvability_residual[j] = std::abs(e.l0->inner(fj, P.Qz)) / (e.l0->norm(fj) * e.l0->norm(P.Qz) + 1e-300);
    if (j > k) break;
    e.forcing.push_back(fj);
    const Eigen::ArrayXd g = -fj;
    const L0Result sol = e.l0->solve(g, g(0), g(P.n - 1), opt.solvability_tol);
    e.w_hat.push_back(sol.phi);
    e.w_hat_z.push_back(fd::d1(sol.phi, P.h));
    e.orthogonality[j] = std::abs(sol.inner) / (e.l0->norm(sol.phi) * e.l0->norm(P.Qz) + 1e-300);
    e.roundtrip[j] = sol.roundtrip;
  }
  // Inner residuals and tails of the finalized w^j.
  for (int j = 1; j <= k; ++j) {
    const Eigen::ArrayXd Lw = e.l0->apply(e.w[j]);
    double res = 0.0;
    for (int i = 2; i < P.n - 2; ++i) res = std::max(res, std::abs(Lw(i) + e.forcing[j](i)));
    e.inner_residual[j] = res;
    e.tail_error_lo[j] = std::abs(e.w[j](0) - e.left_limit(j));
    e.tail_error_hi[j] = std::abs(e.w[j](P.n - 1) - e.right_limit(j));
  }
  return e;
}

}  // namespace mcrd
