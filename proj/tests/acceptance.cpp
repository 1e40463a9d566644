// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "common.hpp"
#include "mcrd/spectrum.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mcrd;
using namespace mcrd::testing;

namespace {

// Tolerances and runtime limits.
constexpr double kVStarTol = 1e-10, kJPrimeTol = 1e-8, kBranchTol = 1e-12;
constexpr double kTanhTol = 1e-6, kSpeedTol = 1e-8, kMassTol = 1e-6;
constexpr double kSpeedIdentityRel = 1e-4, kSpeedFloor = 1e-3;
constexpr double kRoundTripTol = 1e-8, kKernelTol = 1e-9;
constexpr double kResidualMargin = 0.7, kMeanMargin = 1.7, kSymmetricDefect = 1e-13;
constexpr double kNewtonTol = 1e-11, kMassIdentity = 1e-12, kAccuracyMargin = 0.3;
constexpr int kNewtonIters = 8;
constexpr double kRichardsonRel = 0.05, kMuStarSpread = 0.10, kAdjointTol = 1e-9, kDenseTol = 1e-8;
constexpr double kEta = 0.05, kPlateauK = 12.0, kCrossingEps = 5.0;
constexpr double kMirrorRadius = 1e-14, kMirrorBranch = 0.05;
constexpr double kL1Slope = 0.5, kL1Band = 0.15, kProfileRel = 0.05;

struct Outcome {
  bool pass = true;
  std::ostringstream note;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note << " [fail: " << what << "]";
    }
  }
};

std::string g(double x) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", x);
  return b;
}

// Mori balance integral in closed form: F(s) = -s^2/2 + v s + gamma v (s - atan s) between the stable roots.
double mori_J(const EquilibriumStructure& eq, double v) {
  const Roots h = equilibrium_roots(eq.reaction, v);
  auto F = [&](double s) { return -s * s / 2 + v * s + 9.0 * v * (s - std::atan(s)); };
  return F(h.h_plus) - F(h.h_minus);
}

const ExpansionData& exp_for(int N, int k) {
  static std::map<std::pair<int, int>, ExpansionData> cache;
  auto it = cache.find({N, k});
  if (it == cache.end()) it = cache.emplace(std::pair{N, k}, cubic_exp(0.0, 1.0, N, k)).first;
  return it->second;
}

struct Sample {
  ApproximateSolution s;
  SpectralReport rep;
};

const std::vector<Sample>& spectral_family(int N) {
  static std::map<int, std::vector<Sample>> cache;
  auto& v = cache[N];
  if (v.empty())
    for (double eps : benchmark_eps()) {
      Sample smp{assemble(exp_for(N, 2), eps), {}};
      smp.rep = analyze_spectrum(smp.s, exp_for(N, 2));
      v.push_back(std::move(smp));
    }
  return v;
}

std::map<std::pair<int, int>, SweepResult> sweeps;

void c1(Outcome& o) {
  const auto eq = find_vstar(BistableReaction::cubic_linear());
  o.require(std::abs(eq.v_star) <= kVStarTol, "v*");
  o.require(std::abs(eq.J_prime_star - 2.0) <= kJPrimeTol, "J'");
  o.require(std::abs(eq.h.h_plus - 1.0) <= kBranchTol && std::abs(eq.h.h_minus + 1.0) <= kBranchTol, "h+-");
  o.note << "v*=" << g(eq.v_star) << " J'-2=" << g(eq.J_prime_star - 2.0) << " h+-1=" << g(eq.h.h_plus - 1.0);
}

void c2(Outcome& o) {
  WaveOptions w;
  w.Z = 20.0;
  w.n_z = 4096;
  const auto p = solve_profile(cubic(), 0.0, w);
  const double err = (p.Q + (p.z / std::sqrt(2.0)).tanh()).abs().maxCoeff();
  const double dm = std::abs(p.m - 2.0 * std::sqrt(2.0) / 3.0);
  o.require(err <= kTanhTol, "tanh profile");
  o.require(std::abs(p.c) <= kSpeedTol, "speed");
  o.require(dm <= kMassTol, "mass");
  o.note << "|Q+tanh|=" << g(err) << " |c|=" << g(std::abs(p.c)) << " |m-m*|=" << g(dm);
}

void c3(Outcome& o) {
  const auto& eq = mori();
  double worst = 0.0;
  for (double t : {-0.8, -0.4, 0.0, 0.4, 0.8}) {
    const double s = t < 0 ? eq.v_star + t * (eq.v_star - eq.v_lo) : eq.v_star + t * (eq.v_hi - eq.v_star);
    const auto p = solve_profile(eq, s);
    const double err = std::abs(p.c + mori_J(eq, s) / p.m) / (kSpeedIdentityRel * std::max(std::abs(p.c), kSpeedFloor));
    worst = std::max(worst, err);
  }
  o.require(worst <= 1.0, "speed identity");
  o.note << "max err/bound=" << g(worst) << " over 5 s";
}

void c4(Outcome& o) {
  const auto& P = cubic_wave();
  L0Solver L(P, cubic().reaction);
  std::mt19937_64 rng(20261015);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), ctr(-6.0, 6.0), wid(0.5, 3.0);
  double rt = 0.0, inner = 0.0;
  for (int t = 0; t < 20; ++t) {
    Eigen::ArrayXd gv = Eigen::ArrayXd::Zero(P.n);
    for (int b = 0; b < 3; ++b) gv += amp(rng) * (-((P.z - ctr(rng)) / wid(rng)).square()).exp();
    gv -= L.inner(gv, P.Qz) / L.inner(P.Qz, P.Qz) * P.Qz;
    const auto r = L.solve(gv, 0.0, 0.0);
    // Independent round trip: apply the difference operator to phi directly.
    double own = 0.0;
    for (int i = 2; i < P.n - 2; ++i) {
      const double d2 = (-r.phi(i - 2) + 16 * r.phi(i - 1) - 30 * r.phi(i) + 16 * r.phi(i + 1) - r.phi(i + 2)) /
                        (12 * P.h * P.h);
      own = std::max(own, std::abs(d2 + cubic().reaction.partial(1, 0, P.Q(i), P.s) * r.phi(i) - gv(i)));
    }
    rt = std::max({rt, r.roundtrip, own});
    inner = std::max(inner, std::abs(r.inner));
  }
  bool raised = false;
  try {
    L.solve(P.Qz, 0.0, 0.0);
  } catch (const Error& e) {
    raised = e.code() == ErrorCode::SolvabilityViolation;
  }
  o.require(rt <= kRoundTripTol, "round trip");
  o.require(inner <= kKernelTol, "kernel component");
  o.require(raised, "w0_z not rejected");
  o.note << "roundtrip=" << g(rt) << " |<phi,w_z>|=" << g(inner) << " kernel rejected=" << raised;
}

void c5(Outcome& o) {
  for (int N : {1, 2})
    for (int k = 0; k <= 2; ++k) {
      const auto& r = sweeps[{N, k}] = residual_sweep(exp_for(N, k), benchmark_eps());
      o.require(r.slope >= k + kResidualMargin, "N=" + std::to_string(N) + " k=" + std::to_string(k));
      o.note << "N" << N << "k" << k << "=" << g(r.slope) << " ";
    }
}

void c6(Outcome& o) {
  for (int N : {1, 2})
    for (int k = 0; k <= 2; ++k) {
      const auto& r = sweeps.at({N, k});
      double worst = 0.0;
      for (const auto& row : r.rows) worst = std::max(worst, row.mean_defect);
      const std::string tag = "N" + std::to_string(N) + "k" + std::to_string(k);
      if (worst <= kSymmetricDefect) {
        // Odd reaction and M = 0: S and every A_j vanish, so the defect is rounding only.
        o.note << tag << "=zero(" << g(worst) << ") ";
        continue;
      }
      o.require(r.mean_slope >= k + kMeanMargin, tag);
      o.note << tag << "=" << g(r.mean_slope) << " ";
    }
  // Off-symmetric mass so that the one-dimensional identity is exercised with a nonzero defect.
  for (int k = 0; k <= 2; ++k) {
    const auto r = residual_sweep(cubic_exp(0.3, 1.0, 1, k), benchmark_eps());
    o.require(r.mean_slope >= k + kMeanMargin, "N1 M=0.3 k" + std::to_string(k));
    o.note << "N1k" << k << "(M=0.3)=" << g(r.mean_slope) << " ";
  }
}

void c7(Outcome& o) {
  int worst_iters = 0;
  double worst_mass = 0.0;
  for (int N : {1, 2}) {
    std::vector<Eigen::ArrayXd> us, vs;
    std::vector<std::vector<ApproximateSolution>> fam(2);
    for (double eps : benchmark_eps()) {
      const auto init = assemble(exp_for(N, 2), eps);
      const auto st = solve_from(init, exp_for(N, 2));
      o.require(st.newton.residual <= kNewtonTol, "residual");
      if (eps == 0.02) worst_iters = std::max(worst_iters, st.newton.iterations);
      worst_mass = std::max(worst_mass, st.mass_defect);
      us.push_back(st.newton.u);
      vs.push_back(st.v);
      fam[0].push_back(assemble_on(exp_for(N, 1), eps, init.grid));
      fam[1].push_back(init);
    }
    const auto rep = accuracy_report(us, vs, fam, benchmark_eps());
    for (const auto& [k, slope] : rep.u_slopes) {
      o.require(slope >= k - kAccuracyMargin, "slope N=" + std::to_string(N) + " k=" + std::to_string(k));
      o.note << "N" << N << "k" << k << "=" << g(slope) << " ";
    }
  }
  o.require(worst_iters <= kNewtonIters, "iterations");
  o.require(worst_mass <= kMassIdentity, "mass identity");
  o.note << "iters@0.02=" << worst_iters << " mass=" << g(worst_mass);
}

void c8(Outcome& o) {
  const std::pair<int, double> cases[] = {{1, -2.0 * std::sqrt(2.0)}, {2, -4.0}};
  for (const auto& [N, target] : cases) {
    std::vector<double> x, y;
    double hi = -1e300, lo = 1e300, adj = 0.0;
    for (const auto& smp : spectral_family(N)) {
      o.require(std::isfinite(smp.rep.lambda0) && smp.rep.sign_changes == 1, "real simple root");
      x.push_back(smp.s.eps);
      y.push_back(smp.rep.ratio);
      hi = std::max(hi, smp.rep.next_eig_bound);
      lo = std::min(lo, smp.rep.next_eig_bound);
      adj = std::max(adj, std::abs(smp.rep.lambda0_adjoint - smp.rep.lambda0));
    }
    const double lim = extrapolate_to_zero(x, y);
    const double mu_star = -hi;
    o.require(std::abs(lim / target - 1.0) <= kRichardsonRel, "Richardson N=" + std::to_string(N));
    o.require(mu_star > 0.0 && (hi - lo) <= kMuStarSpread * mu_star, "mu* N=" + std::to_string(N));
    o.require(adj <= kAdjointTol, "adjoint");
    o.note << "N" << N << ": lim=" << g(lim) << " mu*=" << g(mu_star) << " adj=" << g(adj) << "; ";
  }
  AssembleOptions small;
  small.grid.nodes_per_eps = 24;
  small.grid.fine_cap_fraction = 1.0;
  small.grid.coarse_spacing = 0.02;
  double dense = 0.0;
  for (int N : {1, 2}) {
    const auto s = assemble(exp_for(N, 2), 0.04, small);
    o.require(s.grid.n() <= 400, "dense size");
    const auto rep = analyze_spectrum(s, exp_for(N, 2));
    const bool ok = rep.dense_lambda && std::isfinite(*rep.dense_lambda) && rep.dense_in_window == 1;
    o.require(ok, "dense eigenvalue real and unique");
    if (ok) dense = std::max(dense, std::abs(*rep.dense_lambda - rep.lambda0));
  }
  o.require(dense <= kDenseTol, "dense oracle");
  o.note << "dense=" << g(dense);
}

void c9(Outcome& o) {
  const auto& eq = cubic();
  double K = 0.0, cross = 0.0;
  for (int N : {1, 2})
    for (double eps : benchmark_eps()) {
      const auto& e = exp_for(N, 2);
      const auto s = assemble(e, eps);
      K = std::max(K, plateau_width(s.grid.r, s.u, e.R_star, eps, eq.h.h_plus, eq.h.h_minus, kEta));
      const double rc = crossing_radius(s.grid.r, s.u, eq.h.h_zero, e.R_star);
      cross = std::max(cross, std::isfinite(rc) ? std::abs(rc - e.R_star) / eps : 1e300);
    }
  o.require(K <= kPlateauK, "plateau width");
  o.require(cross <= kCrossingEps, "crossing");
  o.note << "K(0.05)=" << g(K) << " max|r_c-R*|/eps=" << g(cross);
}

void c10(Outcome& o) {
  const double M = 0.2, eps = 0.02;
  const auto& eq = cubic();
  double dr = 0.0, res = 0.0, branch = 0.0, mass = 0.0;
  for (int N : {1, 2}) {
    const auto e = cubic_exp(M, 1.0, N, 2, true);
    dr = std::max(dr, std::abs(std::pow(e.R_star, N) - (1.0 - std::pow(interface_radius(eq, M, N), N))));
    const auto st = solve_from(assemble(e, eps), e);
    const auto& u = st.newton.u;
    res = std::max(res, st.newton.residual);
    mass = std::max(mass, st.mass_defect);
    branch = std::max({branch, std::abs(u(0) - eq.h.h_minus), std::abs(u(u.size() - 1) - eq.h.h_plus)});
  }
  o.require(dr <= kMirrorRadius, "radius");
  o.require(res <= kNewtonTol && mass <= kMassIdentity, "converged");
  o.require(branch <= kMirrorBranch, "branches");
  o.note << "|R^N-(1-R*^N)|=" << g(dr) << " res=" << g(res) << " branch dev=" << g(branch);
}

void c11(Outcome& o) {
  for (int N : {1, 2}) {
    std::vector<double> x, y;
    for (const auto& smp : spectral_family(N)) {
      x.push_back(smp.s.eps);
      y.push_back(eigenfunction_decay(smp.rep.phi0, smp.s).l1);
    }
    const double slope = loglog_slope(x, y);
    const auto& last = spectral_family(N).back();
    const double prof = eigenfunction_profile_error(last.rep.phi0, last.s, exp_for(N, 2));
    o.require(std::abs(slope - kL1Slope) <= kL1Band, "L1 slope N=" + std::to_string(N));
    o.require(prof <= kProfileRel, "profile N=" + std::to_string(N));
    o.note << "N" << N << ": slope=" << g(slope) << " profile=" << g(prof) << "; ";
  }
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> all{
      {"C1 equilibrium structure", 1, c1},  {"C2 wave benchmark", 5, c2},
      {"C3 speed identity", 30, c3},        {"C4 L0 inverse", 5, c4},
      {"C5 residual order", 60, c5},        {"C6 expansion identity", 10, c6},
      {"C7 exact solve and accuracy", 60, c7}, {"C8 critical eigenvalue", 120, c8},
      {"C9 layer localization", 10, c9},    {"C10 mirrored family", 30, c10},
      {"C11 eigenfunction norms", 30, c11},
  };
  int failed = 0;
  for (const auto& c : all) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(dt <= c.limit_s, "runtime");
    failed += !o.pass;
    std::printf("%s %-30s %.2fs/%gs  %s\n", o.pass ? "PASS" : "FAIL", c.name, dt, c.limit_s, o.note.str().c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return failed == 0 ? 0 : 1;
}
