#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace mcrd::poly {

// Coefficients in ascending powers.
using Poly = std::vector<double>;

inline void trim(Poly& p, double tol = 0.0) {
  while (p.size() > 1 && std::abs(p.back()) <= tol) p.pop_back();
}

inline double eval(const Poly& p, double x) {
  double s = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) s = s * x + *it;
  return s;
}

inline Poly derivative(const Poly& p) {
  if (p.size() <= 1) return {0.0};
  Poly d(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
  return d;
}

inline Poly add(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += b[i];
  return r;
}

inline Poly scale(const Poly& a, double s) {
  Poly r(a);
  for (auto& x : r) x *= s;
  return r;
}

inline Poly mul(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {0.0};
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

// Real roots by companion-matrix eigenvalues, polished with two Newton steps.
inline std::vector<double> real_roots(Poly p, double imag_tol = 1e-9) {
  double scale_c = 0.0;
  for (double c : p) scale_c = std::max(scale_c, std::abs(c));
  trim(p, 1e-14 * scale_c);
  const int n = static_cast<int>(p.size()) - 1;
  std::vector<double> out;
  if (n < 1) return out;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) C(i, n - 1) = -p[i] / p[n];
  Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  const Poly dp = derivative(p);
  for (int i = 0; i < n; ++i) {
    auto z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > imag_tol * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 2; ++it) {
      double d = eval(dp, x);
      if (d != 0.0) x -= eval(p, x) / d;
    }
    out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Polynomial whose coefficients are themselves polynomials in a parameter.
using PolyPoly = std::vector<Poly>;

// Discriminant of a cubic a u^3 + b u^2 + c u + d with parameter-dependent coefficients.
inline Poly cubic_discriminant(const PolyPoly& q) {
  const Poly& d = q[0];
  const Poly& c = q[1];
  const Poly& b = q[2];
  const Poly& a = q[3];
  Poly r = scale(mul(mul(a, b), mul(c, d)), 18.0);
  r = add(r, scale(mul(mul(b, mul(b, b)), d), -4.0));
  r = add(r, mul(mul(b, b), mul(c, c)));
  r = add(r, scale(mul(a, mul(c, mul(c, c))), -4.0));
  r = add(r, scale(mul(mul(a, a), mul(d, d)), -27.0));
  return r;
}

}  // namespace mcrd::poly
