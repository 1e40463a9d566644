#pragma once

#include "mcrd/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace mcrd {

// LU of a tridiagonal matrix with partial pivoting (second superdiagonal from row swaps).
class TridiagLU {
 public:
  TridiagLU() = default;
  // lo(i) multiplies x_{i-1} in row i, up(i) multiplies x_{i+1}; lo(0), up(n-1) ignored.
  TridiagLU(const Eigen::ArrayXd& lo, const Eigen::ArrayXd& di, const Eigen::ArrayXd& up) { factor(lo, di, up); }

  void factor(const Eigen::ArrayXd& lo, const Eigen::ArrayXd& di, const Eigen::ArrayXd& up) {
    const int n = static_cast<int>(di.size());
    n_ = n;
    d_ = di;
    du_ = Eigen::ArrayXd::Zero(n);
    du2_ = Eigen::ArrayXd::Zero(n);
    dl_ = Eigen::ArrayXd::Zero(n);
    swap_.assign(n, false);
    for (int i = 0; i + 1 < n; ++i) du_(i) = up(i);
    Eigen::ArrayXd l = Eigen::ArrayXd::Zero(n);
    for (int i = 1; i < n; ++i) l(i) = lo(i);
    double scale = 0.0;
    for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(di(i)) + std::abs(lo(i)) + std::abs(up(i)));
    for (int i = 0; i + 1 < n; ++i) {
      // Row i holds (d_i, du_i, du2_i); row i+1 holds (l_{i+1}, d_{i+1}, du_{i+1}).
      if (std::abs(d_(i)) >= std::abs(l(i + 1))) {
        if (d_(i) == 0.0) throw Error(ErrorCode::SingularJacobian, "tridiagonal pivot vanished");
        const double m = l(i + 1) / d_(i);
        dl_(i) = m;
        d_(i + 1) -= m * du_(i);
      } else {
        const double m = d_(i) / l(i + 1);
        dl_(i) = m;
        swap_[i] = true;
        d_(i) = l(i + 1);
        const double t = d_(i + 1);
        d_(i + 1) = du_(i) - m * t;
        if (i + 2 < n) {
          du2_(i) = du_(i + 1);
          du_(i + 1) = -m * du2_(i);
        }
        du_(i) = t;
      }
    }
    for (int i = 0; i < n; ++i)
      if (std::abs(d_(i)) <= 1e-300 + 1e-17 * scale) throw Error(ErrorCode::SingularJacobian, "tridiagonal pivot vanished");
  }

  Eigen::VectorXd solve(Eigen::VectorXd b) const {
    const int n = n_;
    for (int i = 0; i + 1 < n; ++i) {
      if (swap_[i]) {
        const double t = b(i);
        b(i) = b(i + 1);
        b(i + 1) = t - dl_(i) * b(i);
      } else {
        b(i + 1) -= dl_(i) * b(i);
      }
    }
    b(n - 1) /= d_(n - 1);
    if (n > 1) b(n - 2) = (b(n - 2) - du_(n - 2) * b(n - 1)) / d_(n - 2);
    for (int i = n - 3; i >= 0; --i) b(i) = (b(i) - du_(i) * b(i + 1) - du2_(i) * b(i + 2)) / d_(i);
    return b;
  }

  int size() const { return n_; }

 private:
  int n_ = 0;
  Eigen::ArrayXd d_, du_, du2_, dl_;
  std::vector<bool> swap_;
};

}  // namespace mcrd
