#pragma once

#include "mcrd/error.hpp"
#include "mcrd/poly.hpp"
#include "mcrd/quadrature.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace mcrd {

// One monomial c * u^p * v^q.
struct PolyTerm {
  int p;
  int q;
  double c;
};

class BistableReaction {
 public:
  enum class Kind { CubicLinear, Mori, UserPolynomial };

  static BistableReaction cubic_linear(int max_order = 16) {
    BistableReaction r;
    r.kind_ = Kind::CubicLinear;
    r.terms_ = {{1, 0, 1.0}, {3, 0, -1.0}, {0, 1, 1.0}};
    r.max_order_ = max_order;
    return r;
  }

  static BistableReaction mori(double gamma, double delta, int max_order = 8) {
    if (!(delta > 0.0) || !(gamma > 8.0 * delta))
      throw Error(ErrorCode::NoBistability,
                  "Mori reaction requires gamma > 8 delta > 0 (got gamma=" + std::to_string(gamma) +
                      ", delta=" + std::to_string(delta) + ")");
    BistableReaction r;
    r.kind_ = Kind::Mori;
    r.gamma_ = gamma;
    r.delta_ = delta;
    r.max_order_ = max_order;
    return r;
  }

  static BistableReaction polynomial(std::vector<PolyTerm> terms, int max_order = 16) {
    for (const auto& t : terms)
      if (t.p < 0 || t.q < 0) throw Error(ErrorCode::InvalidArgument, "negative exponent in polynomial term");
    BistableReaction r;
    r.kind_ = Kind::UserPolynomial;
    r.terms_ = std::move(terms);
    r.max_order_ = max_order;
    return r;
  }

  Kind kind() const { return kind_; }

  // Mori concentrations are nonnegative, so its scan starts at v = 0.
  double default_scan_lo() const { return kind_ == Kind::Mori ? 0.0 : -8.0; }
  double gamma() const { return gamma_; }
  double delta() const { return delta_; }
  const std::vector<PolyTerm>& terms() const { return terms_; }
  int max_derivative_order() const { return max_order_; }
  bool is_polynomial() const { return kind_ != Kind::Mori; }

  std::string name() const {
    switch (kind_) {
      case Kind::CubicLinear: return "cubic_linear";
      case Kind::Mori: return "mori";
      case Kind::UserPolynomial: return "polynomial";
    }
    return "unknown";
  }

  double f(double u, double v) const { return partial(0, 0, u, v); }

  // d^{p+q} f / du^p dv^q at (u, v).
  double partial(int p, int q, double u, double v) const {
    if (p < 0 || q < 0) throw Error(ErrorCode::InvalidArgument, "negative derivative order");
    if (p + q > max_order_)
      throw Error(ErrorCode::OrderUnavailable, "order " + std::to_string(p + q) + " exceeds " +
                                                   std::to_string(max_order_));
    if (kind_ != Kind::Mori) {
      double s = 0.0;
      for (const auto& t : terms_) {
        if (t.p < p || t.q < q) continue;
        s += t.c * falling(t.p, p) * falling(t.q, q) * ipow(u, t.p - p) * ipow(v, t.q - q);
      }
      return s;
    }
    if (q >= 2) return 0.0;
    const double g = hill_derivative(p, u);
    if (q == 1) return (p == 0 ? delta_ : 0.0) + gamma_ * g;
    if (p == 0) return -u + (delta_ + gamma_ * g) * v;
    if (p == 1) return -1.0 + gamma_ * g * v;
    return gamma_ * g * v;
  }

  // The root problem in u as a polynomial with v-polynomial coefficients (ascending in u).
  poly::PolyPoly root_polynomial() const {
    if (kind_ == Kind::Mori) {
      // (1+u^2) f = -u^3 + (delta+gamma) v u^2 - u + delta v, sign flipped.
      return {{0.0, -delta_}, {1.0}, {0.0, -(delta_ + gamma_)}, {1.0}};
    }
    int dp = 0;
    int dq = 0;
    for (const auto& t : terms_) {
      dp = std::max(dp, t.p);
      dq = std::max(dq, t.q);
    }
    poly::PolyPoly out(dp + 1, poly::Poly(dq + 1, 0.0));
    for (const auto& t : terms_) out[t.p][t.q] += t.c;
    return out;
  }

  // Antiderivative in u of d^q f / dv^q, for polynomial kinds.
  double u_antiderivative(int q, double u, double v) const {
    double s = 0.0;
    for (const auto& t : terms_) {
      if (t.q < q) continue;
      s += t.c * falling(t.q, q) * ipow(u, t.p + 1) / (t.p + 1) * ipow(v, t.q - q);
    }
    return s;
  }

  // n-th derivative of u^2/(1+u^2).
  static double hill_derivative(int n, double u) {
    const double a = 1.0 + u * u;
    switch (n) {
      case 0: return u * u / a;
      case 1: return 2.0 * u / (a * a);
      case 2: return (2.0 - 6.0 * u * u) / (a * a * a);
      case 3: return 24.0 * u * (u * u - 1.0) / (a * a * a * a);
      case 4: return -24.0 * (5.0 * u * u * u * u - 10.0 * u * u + 1.0) / (a * a * a * a * a);
      default: return hill_derivative_taylor(n, u);
    }
  }

  // Taylor recursion for 1/(1+(u+t)^2); g^{(n)} = -n! r_n.
  static double hill_derivative_taylor(int n, double u) {
    if (n == 0) return u * u / (1.0 + u * u);
    const double a0 = 1.0 + u * u;
    const double a1 = 2.0 * u;
    std::vector<double> r(n + 1, 0.0);
    r[0] = 1.0 / a0;
    for (int k = 1; k <= n; ++k) {
      double s = a1 * r[k - 1];
      if (k >= 2) s += r[k - 2];
      r[k] = -s / a0;
    }
    double fact = 1.0;
    for (int k = 2; k <= n; ++k) fact *= k;
    return -fact * r[n];
  }

 private:
  static double falling(int n, int k) {
    double s = 1.0;
    for (int i = 0; i < k; ++i) s *= (n - i);
    return s;
  }
  static double ipow(double x, int n) {
    double s = 1.0;
    for (int i = 0; i < n; ++i) s *= x;
    return s;
  }

  Kind kind_ = Kind::CubicLinear;
  double gamma_ = 0.0;
  double delta_ = 0.0;
  std::vector<PolyTerm> terms_;
  int max_order_ = 16;
};

// Max relative mismatch between stored partials and 5-point central differences at random points.
inline double derivative_self_test(const BistableReaction& r, unsigned seed, int points = 32, int max_order = 3,
                                   double u_lo = -1.5, double u_hi = 1.5, double v_lo = -0.5, double v_hi = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> du(u_lo, u_hi), dv(v_lo, v_hi);
  max_order = std::min(max_order, r.max_derivative_order() - 1);
  double worst = 0.0;
  const double h = 1e-3;
  auto d5 = [h](auto&& g) { return (g(-2 * h) - 8 * g(-h) + 8 * g(h) - g(2 * h)) / (12 * h); };
  for (int i = 0; i < points; ++i) {
    const double u = du(rng), v = dv(rng);
    for (int p = 0; p <= max_order; ++p) {
      for (int q = 0; p + q <= max_order; ++q) {
        const double fu = d5([&](double t) { return r.partial(p, q, u + t, v); });
        const double fv = d5([&](double t) { return r.partial(p, q, u, v + t); });
        const double eu = r.partial(p + 1, q, u, v);
        const double ev = r.partial(p, q + 1, u, v);
        worst = std::max(worst, std::abs(fu - eu) / std::max(1.0, std::abs(eu)));
        worst = std::max(worst, std::abs(fv - ev) / std::max(1.0, std::abs(ev)));
      }
    }
  }
  return worst;
}

struct Roots {
  double h_minus;
  double h_zero;
  double h_plus;
};

inline poly::Poly root_polynomial_at(const BistableReaction& r, double v) {
  const auto pp = r.root_polynomial();
  poly::Poly p(pp.size());
  for (std::size_t i = 0; i < pp.size(); ++i) p[i] = poly::eval(pp[i], v);
  return p;
}

// h^-(v) < h^0(v) < h^+(v).
inline Roots equilibrium_roots(const BistableReaction& r, double v) {
  auto roots = poly::real_roots(root_polynomial_at(r, v));
  if (roots.size() != 3)
    throw Error(ErrorCode::NoBistability,
                std::to_string(roots.size()) + " real roots at v=" + sci(v));
  const double scale = std::max(1.0, std::abs(v));
  for (double& h : roots) {
    for (int it = 0; it < 6; ++it) {
      const double fv = r.f(h, v);
      if (std::abs(fv) <= 1e-14 * scale) break;
      const double d = r.partial(1, 0, h, v);
      if (d == 0.0) break;
      h -= fv / d;
    }
  }
  std::sort(roots.begin(), roots.end());
  const double gap = 1e-9 * std::max(1.0, std::abs(roots[2]) + std::abs(roots[0]));
  if (roots[1] - roots[0] <= gap || roots[2] - roots[1] <= gap)
    throw Error(ErrorCode::NoBistability, "roots not distinct at v=" + sci(v));
  const double s0 = r.partial(1, 0, roots[0], v);
  const double s1 = r.partial(1, 0, roots[1], v);
  const double s2 = r.partial(1, 0, roots[2], v);
  if (!(s0 < 0.0 && s1 > 0.0 && s2 < 0.0))
    throw Error(ErrorCode::SignPatternViolation, "f_u signs at roots are not (-,+,-) at v=" + sci(v));
  return {roots[0], roots[1], roots[2]};
}

inline bool is_bistable(const BistableReaction& r, double v) {
  try {
    equilibrium_roots(r, v);
    return true;
  } catch (const Error&) {
    return false;
  }
}

struct WindowSearch {
  double scan_lo = -8.0;
  double scan_hi = 8.0;
  int scan_points = 2048;
};

// All bistable v-intervals inside the scan range, ascending.
inline std::vector<std::pair<double, double>> bistable_windows(const BistableReaction& r,
                                                               const WindowSearch& ws = {}) {
  std::vector<std::pair<double, double>> out;
  const auto pp = r.root_polynomial();
  if (pp.size() == 4) {
    std::vector<double> cuts{ws.scan_lo, ws.scan_hi};
    for (double x : poly::real_roots(poly::cubic_discriminant(pp), 1e-12))
      if (x > ws.scan_lo && x < ws.scan_hi) cuts.push_back(x);
    for (double x : poly::real_roots(pp[3], 1e-12))
      if (x > ws.scan_lo && x < ws.scan_hi) cuts.push_back(x);
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double a = cuts[i];
      const double b = cuts[i + 1];
      if (b - a <= 1e-12) continue;
      if (!is_bistable(r, 0.5 * (a + b))) continue;
      if (!out.empty() && std::abs(out.back().second - a) <= 1e-14 && is_bistable(r, a))
        out.back().second = b;
      else
        out.emplace_back(a, b);
    }
    return out;
  }
  const int n = ws.scan_points;
  auto at = [&](int i) { return ws.scan_lo + (ws.scan_hi - ws.scan_lo) * i / (n - 1); };
  auto bisect = [&](double in, double outside) {
    while (std::abs(in - outside) > 1e-10) {
      const double m = 0.5 * (in + outside);
      if (is_bistable(r, m))
        in = m;
      else
        outside = m;
    }
    return in;
  };
  bool prev = is_bistable(r, at(0));
  double start = ws.scan_lo;
  for (int i = 1; i < n; ++i) {
    const bool cur = is_bistable(r, at(i));
    if (cur && !prev) start = bisect(at(i), at(i - 1));
    if (!cur && prev) out.emplace_back(start, bisect(at(i - 1), at(i)));
    prev = cur;
  }
  if (prev) out.emplace_back(start, ws.scan_hi);
  return out;
}

// J(v) = integral of f(s, v) over (h^-(v), h^+(v)).
inline double balance_integral(const BistableReaction& r, double v) {
  const Roots h = equilibrium_roots(r, v);
  if (r.is_polynomial()) return r.u_antiderivative(0, h.h_plus, v) - r.u_antiderivative(0, h.h_minus, v);
  return quad::simpson_richardson([&](double s) { return r.f(s, v); }, h.h_minus, h.h_plus, 1e-13).value;
}

// J'(v) by the f_v-integral identity.
inline double balance_derivative(const BistableReaction& r, double v) {
  const Roots h = equilibrium_roots(r, v);
  if (r.is_polynomial()) return r.u_antiderivative(1, h.h_plus, v) - r.u_antiderivative(1, h.h_minus, v);
  return quad::simpson_richardson([&](double s) { return r.partial(0, 1, s, v); }, h.h_minus, h.h_plus, 1e-13)
      .value;
}

struct EquilibriumStructure {
  BistableReaction reaction;
  double v_lo = 0.0;
  double v_hi = 0.0;
  std::vector<std::pair<double, double>> other_windows;
  double v_star = 0.0;
  double J_star = 0.0;
  double J_prime_star = 0.0;
  Roots h{};
  // Partials at the stable branches h^+(v*) (inside the layer) and h^-(v*) (outside).
  double fu_hp = 0.0, fu_hm = 0.0, fv_hp = 0.0, fv_hm = 0.0;
  // (f_u - f_v) at h^+ and h^-; negative under transversality.
  double transversality_margin_hp = 0.0, transversality_margin_hm = 0.0;

  Roots branches(double v) const { return equilibrium_roots(reaction, v); }
  double jump() const { return h.h_plus - h.h_minus; }
  // h_v = -f_v/f_u on a stable branch.
  double hv_hp() const { return -fv_hp / fu_hp; }
  double hv_hm() const { return -fv_hm / fu_hm; }
};

struct VStarOptions {
  std::optional<WindowSearch> window{};
  int samples = 257;
  double j_tol = 1e-10;
  double jprime_min = 1e-8;
};

inline EquilibriumStructure find_vstar(const BistableReaction& r, const VStarOptions& opt = {}) {
  WindowSearch ws;
  ws.scan_lo = r.default_scan_lo();
  const auto windows = bistable_windows(r, opt.window.value_or(ws));
  if (windows.empty()) throw Error(ErrorCode::NoBistability, "no bistable window in the scan range");
  EquilibriumStructure eq{r};
  eq.v_lo = windows.front().first;
  eq.v_hi = windows.front().second;
  eq.other_windows.assign(windows.begin() + 1, windows.end());

  const int n = opt.samples;
  const double width = eq.v_hi - eq.v_lo;
  auto vs = [&](int i) { return eq.v_lo + width * (i + 0.5) / n; };
  double vstar = std::numeric_limits<double>::quiet_NaN();
  double jprev = balance_integral(r, vs(0));
  if (std::abs(jprev) <= 1e-14) vstar = vs(0);
  for (int i = 1; i < n && std::isnan(vstar); ++i) {
    const double jc = balance_integral(r, vs(i));
    if (std::abs(jc) <= 1e-14) {
      vstar = vs(i);
      break;
    }
    if ((jprev < 0.0) != (jc < 0.0)) {
      auto fn = [&](double v) { return balance_integral(r, v); };
      std::uintmax_t iters = 200;
      auto tol = [](double a, double b) { return std::abs(a - b) <= 4e-16 * std::max(1.0, std::abs(a)); };
      auto br = boost::math::tools::toms748_solve(fn, vs(i - 1), vs(i), jprev, jc, tol, iters);
      const double a = br.first;
      const double b = br.second;
      vstar = std::abs(fn(a)) <= std::abs(fn(b)) ? a : b;
    }
    jprev = jc;
  }
  if (std::isnan(vstar)) throw Error(ErrorCode::NoMassBalance, "J has constant sign on the bistable window");
  eq.v_star = vstar;
  eq.J_star = balance_integral(r, vstar);
  if (std::abs(eq.J_star) > opt.j_tol)
    throw Error(ErrorCode::NoMassBalance, "|J(v*)| above tolerance: " + sci(eq.J_star));
  eq.J_prime_star = balance_derivative(r, vstar);
  if (std::abs(eq.J_prime_star) <= opt.jprime_min)
    throw Error(ErrorCode::DegenerateBalance, "|J'(v*)| = " + sci(eq.J_prime_star));
  eq.h = equilibrium_roots(r, vstar);
  eq.fu_hp = r.partial(1, 0, eq.h.h_plus, vstar);
  eq.fu_hm = r.partial(1, 0, eq.h.h_minus, vstar);
  eq.fv_hp = r.partial(0, 1, eq.h.h_plus, vstar);
  eq.fv_hm = r.partial(0, 1, eq.h.h_minus, vstar);
  eq.transversality_margin_hp = eq.fu_hp - eq.fv_hp;
  eq.transversality_margin_hm = eq.fu_hm - eq.fv_hm;
  return eq;
}

struct AssumptionReport {
  int samples = 0;
  double max_root_residual = 0.0;
  double max_fu_stable = -INFINITY;              // must stay negative
  double min_fu_middle = INFINITY;               // must stay positive
  double max_transversality_margin = -INFINITY;  // must stay negative
  bool bistable = false;                         // stable outer branches, unstable middle branch
  bool transversal = false;                      // f_u - f_v < 0 on the stable branches
  bool balanced = false;                         // J(v*) = 0 with J'(v*) != 0
};

// Samples the branch sign conditions across the window interior and checks the balance at v*.
inline AssumptionReport check_assumptions(const EquilibriumStructure& eq, int samples = 33) {
  AssumptionReport rep;
  rep.samples = samples;
  const auto& r = eq.reaction;
  const double pad = 0.02 * (eq.v_hi - eq.v_lo);
  for (int i = 0; i < samples; ++i) {
    const double v = eq.v_lo + pad + (eq.v_hi - eq.v_lo - 2 * pad) * i / (samples - 1);
    const Roots h = equilibrium_roots(r, v);
    for (double x : {h.h_minus, h.h_zero, h.h_plus})
      rep.max_root_residual = std::max(rep.max_root_residual, std::abs(r.f(x, v)));
    for (double x : {h.h_minus, h.h_plus}) {
      rep.max_fu_stable = std::max(rep.max_fu_stable, r.partial(1, 0, x, v));
      rep.max_transversality_margin = std::max(rep.max_transversality_margin, r.partial(1, 0, x, v) - r.partial(0, 1, x, v));
    }
    rep.min_fu_middle = std::min(rep.min_fu_middle, r.partial(1, 0, h.h_zero, v));
  }
  rep.bistable = rep.max_fu_stable < 0.0 && rep.min_fu_middle > 0.0;
  rep.transversal = rep.max_transversality_margin < 0.0;
  rep.balanced = std::abs(eq.J_star) <= 1e-10 && std::abs(eq.J_prime_star) > 1e-8;
  return rep;
}

}  // namespace mcrd
