#pragma once

#include "mcrd/reaction.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mcrd {

// Truncated power series sum_j c_j eps^j; coefficients are scalars or grid functions.
template <class C>
struct EpsJet {
  std::vector<C> c;

  EpsJet() = default;
  explicit EpsJet(std::vector<C> coeffs) : c(std::move(coeffs)) {}
  int order() const { return static_cast<int>(c.size()) - 1; }
  const C& operator[](int j) const { return c[j]; }
  C& operator[](int j) { return c[j]; }
};

namespace jet_detail {

inline double zero_like(double) { return 0.0; }
inline Eigen::ArrayXd zero_like(const Eigen::ArrayXd& x) { return Eigen::ArrayXd::Zero(x.size()); }

inline double partial(const BistableReaction& r, int p, int q, double u, double v) { return r.partial(p, q, u, v); }
inline Eigen::ArrayXd partial(const BistableReaction& r, int p, int q, const Eigen::ArrayXd& u,
                              const Eigen::ArrayXd& v) {
  Eigen::ArrayXd out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = r.partial(p, q, u(i), v(i));
  return out;
}
inline Eigen::ArrayXd broadcast(double v, const Eigen::ArrayXd& like) { return Eigen::ArrayXd::Constant(like.size(), v); }
inline double broadcast(double v, double) { return v; }

}  // namespace jet_detail

template <class C>
EpsJet<C> operator+(const EpsJet<C>& a, const EpsJet<C>& b) {
  EpsJet<C> r = a;
  for (int j = 0; j <= a.order(); ++j) r[j] = a[j] + b[j];
  return r;
}

template <class C>
EpsJet<C> operator-(const EpsJet<C>& a, const EpsJet<C>& b) {
  EpsJet<C> r = a;
  for (int j = 0; j <= a.order(); ++j) r[j] = a[j] - b[j];
  return r;
}

// (a b)_j = sum_{i<=j} a_i b_{j-i}, truncated at the common order.
template <class C>
EpsJet<C> operator*(const EpsJet<C>& a, const EpsJet<C>& b) {
  EpsJet<C> r = a;
  for (int j = 0; j <= a.order(); ++j) {
    C s = a[0] * b[j];
    for (int i = 1; i <= j; ++i) s = s + a[i] * b[j - i];
    r[j] = s;
  }
  return r;
}

// Taylor coefficients in eps of f(U(eps), V(eps)).
template <class C>
EpsJet<C> jet_compose_reaction(const BistableReaction& r, const EpsJet<C>& u, const EpsJet<C>& v) {
  const int K = u.order();
  if (v.order() != K) throw Error(ErrorCode::InvalidArgument, "jet orders differ");
  if (K > r.max_derivative_order())
    throw Error(ErrorCode::OrderUnavailable, "jet order exceeds available reaction derivatives");
  const C zero = jet_detail::zero_like(u[0]);
  EpsJet<C> du = u, dv = v;
  du[0] = zero;
  dv[0] = zero;
  std::vector<EpsJet<C>> up(K + 1), vp(K + 1);
  EpsJet<C> one(std::vector<C>(K + 1, zero));
  one[0] = jet_detail::broadcast(1.0, zero);
  up[0] = one;
  vp[0] = one;
  for (int p = 1; p <= K; ++p) {
    up[p] = up[p - 1] * du;
    vp[p] = vp[p - 1] * dv;
  }
  EpsJet<C> out(std::vector<C>(K + 1, zero));
  double fp = 1.0;
  for (int p = 0; p <= K; ++p) {
    if (p > 0) fp *= p;
    double fq = 1.0;
    for (int q = 0; p + q <= K; ++q) {
      if (q > 0) fq *= q;
      const C d = jet_detail::partial(r, p, q, u[0], v[0]);
      const EpsJet<C> prod = up[p] * vp[q];
      for (int j = p + q; j <= K; ++j) out[j] = out[j] + d * prod[j] / (fp * fq);
    }
  }
  return out;
}

}  // namespace mcrd
