#include "common.hpp"
#include "mcrd/solve.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mcrd;
using namespace mcrd::testing;

namespace {

DiscreteOperator random_operator(int n, std::mt19937_64& rng, bool rank_one = true) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  DiscreteOperator op;
  op.lo = op.di = op.up = op.c = op.w = Eigen::ArrayXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    op.lo(i) = i > 0 ? U(rng) : 0.0;
    op.up(i) = i + 1 < n ? U(rng) : 0.0;
    op.di(i) = 3.0 + U(rng);
    if (rank_one) {
      op.c(i) = U(rng);
      op.w(i) = std::abs(U(rng)) / n;
    }
  }
  return op;
}

struct Solved {
  ExpansionData e;
  ApproximateSolution init;
  SolvedState state;
};

Solved solve_benchmark(int N, int k, double eps, bool mirrored = false, double M = 0.0) {
  Solved s{cubic_exp(M, 1.0, N, k, mirrored), {}, {}};
  s.init = assemble(s.e, eps);
  s.state = solve_from(s.init, s.e);
  return s;
}

}  // namespace

TEST(Jacobian, MatchesDirectionalDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> Z;
  for (int N : {1, 2}) {
    const auto e = cubic_exp(0.1, 1.5, N, 1);
    const auto s = assemble(e, 0.02);
    const Problem p{&cubic().reaction, &s.grid, e.M, s.eps, e.D};
    const DiscreteOperator op = linearize(p, s.u);
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::ArrayXd d(s.grid.n());
      for (auto& x : d) x = Z(rng);
      const double t = 1e-6;
      const Eigen::ArrayXd fd = (apply_F(p, s.u + t * d) - apply_F(p, s.u)) / t;
      const Eigen::ArrayXd ex = op.apply(d);
      EXPECT_LE((fd - ex).matrix().norm() / ex.matrix().norm(), 1e-5);
    }
  }
}

TEST(Jacobian, SingleEntryDifferenceMatchesColumn) {
  const auto e = cubic_exp(0.0, 1.0, 1, 2);
  const auto s = assemble(e, 0.02);
  const Problem p{&cubic().reaction, &s.grid, e.M, s.eps, e.D};
  const Eigen::MatrixXd A = linearize(p, s.u).dense();
  const Eigen::ArrayXd F0 = apply_F(p, s.u);
  for (int i : {0, s.grid.n() / 3, s.grid.n() / 2, s.grid.n() - 1}) {
    Eigen::ArrayXd u = s.u;
    const double t = 1e-7;
    u(i) += t;
    const Eigen::VectorXd col = ((apply_F(p, u) - F0) / t).matrix();
    EXPECT_LE((col - A.col(i)).norm(), 1e-5 * A.col(i).norm()) << i;
  }
}

TEST(Jacobian, ShermanMorrisonMatchesDenseSolve) {
  std::mt19937_64 rng(11);
  const DiscreteOperator op = random_operator(200, rng);
  Eigen::VectorXd b = Eigen::VectorXd::Random(200);
  const Eigen::VectorXd dense = op.dense().partialPivLu().solve(b);
  const Eigen::ArrayXd x = jacobian_solve(op, b.array());
  EXPECT_LE((x.matrix() - dense).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Jacobian, PlainTridiagonalWhenNoRankOnePart) {
  std::mt19937_64 rng(3);
  const DiscreteOperator op = random_operator(64, rng, false);
  const Eigen::VectorXd b = Eigen::VectorXd::Random(64);
  const TridiagLU T(op.lo, op.di, op.up);
  EXPECT_LE((jacobian_solve(op, b.array()).matrix() - T.solve(b)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Jacobian, RoundTrip) {
  std::mt19937_64 rng(5);
  for (int n : {10, 200, 3000}) {
    const DiscreteOperator op = random_operator(n, rng);
    const Eigen::ArrayXd x0 = Eigen::ArrayXd::Random(n);
    EXPECT_LE((jacobian_solve(op, op.apply(x0)) - x0).abs().maxCoeff(), 1e-11);
  }
}

TEST(Jacobian, RoundTripOnBenchmarkOperator) {
  const auto e = cubic_exp(0.0, 1.0, 2, 2);
  const auto s = assemble(e, 0.01);
  const Problem p{&cubic().reaction, &s.grid, e.M, s.eps, e.D};
  const DiscreteOperator op = linearize(p, s.u);
  const Eigen::ArrayXd x0 = Eigen::ArrayXd::Random(s.grid.n());
  const Eigen::ArrayXd rhs = op.apply(x0);
  const Eigen::ArrayXd x = jacobian_solve(op, rhs);
  EXPECT_LE((op.apply(x) - rhs).abs().maxCoeff(), 1e-12 * rhs.abs().maxCoeff());
}

TEST(Jacobian, SingularDenominatorIsReported) {
  DiscreteOperator op;
  const int n = 5;
  op.lo = op.up = Eigen::ArrayXd::Zero(n);
  op.di = Eigen::ArrayXd::Ones(n);
  op.c = op.w = Eigen::ArrayXd::Zero(n);
  op.c(0) = -1.0;
  op.w(0) = 1.0;
  try {
    jacobian_solve(op, Eigen::ArrayXd::Ones(n));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularJacobian);
  }
  op.di(2) = 0.0;
  op.c(0) = 0.0;
  EXPECT_THROW(jacobian_solve(op, Eigen::ArrayXd::Ones(n)), Error);
}

TEST(Newton, ConvergesQuicklyFromSecondOrderProfile) {
  const auto s = solve_benchmark(1, 2, 0.02);
  const auto& nr = s.state.newton;
  EXPECT_LE(nr.iterations, 8);
  EXPECT_LE(nr.residual, 1e-11);
  EXPECT_LE(s.state.mass_defect, 1e-12);
  // Quadratic contraction once in the asymptotic regime.
  const auto& h = nr.history;
  ASSERT_GE(h.size(), 3u);
  EXPECT_LE(h[2], 1e3 * h[1] * h[1] + 1e-11);
}

TEST(Newton, ConvergedStartTakesNoSteps) {
  const auto s = solve_benchmark(2, 2, 0.02);
  const Problem p = s.state.problem;
  const auto again = newton_solve(p, s.state.newton.u);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_EQ(again.history.size(), 1u);
}

TEST(Newton, FarFromAsymptoticRegimeFailsLoudly) {
  const auto e = cubic_exp(0.0, 1.0, 1, 2);
  const auto init = assemble_on(e, 0.5, uniform_grid(400, 1));
  try {
    const auto st = solve_from(init, e);
    EXPECT_LE(st.newton.residual, 1e-11);
    EXPECT_LE(st.mass_defect, 1e-12);
  } catch (const Error& err) {
    EXPECT_TRUE(err.code() == ErrorCode::NoConvergence || err.code() == ErrorCode::SingularJacobian);
  }
}

TEST(Newton, IterationCapRaisesNoConvergence) {
  const auto e = cubic_exp(0.0, 1.0, 1, 0);
  const auto init = assemble(e, 0.02);
  NewtonOptions o;
  o.max_iter = 1;
  try {
    solve_from(init, e, o);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NoConvergence);
  }
}

TEST(Newton, ContinuationLeavesEasyCasesAlone) {
  const auto e = cubic_exp(0.0, 1.0, 2, 1);
  NewtonOptions o;
  o.continuation = true;
  const auto st = solve_from(assemble(e, 0.02), e, o);
  EXPECT_FALSE(st.newton.continued);
  EXPECT_LE(st.newton.residual, 1e-11);
}

TEST(Newton, ContinuationRecoversFromCappedStart) {
  const auto e = cubic_exp(0.0, 1.0, 1, 0);
  NewtonOptions o;
  o.continuation = true;
  o.max_iter = 3;
  try {
    const auto st = solve_from(assemble(e, 0.01), e, o);
    EXPECT_LE(st.newton.residual, 1e-11);
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NoConvergence);
  }
}

TEST(Accuracy, SlopesFollowExpansionOrder) {
  for (int N : {1, 2}) {
    const auto& eps = benchmark_eps();
    std::vector<Eigen::ArrayXd> us, vs;
    std::vector<std::vector<ApproximateSolution>> fam(2);
    for (double ep : eps) {
      const auto e2 = cubic_exp(0.0, 1.0, N, 2);
      const auto init = assemble(e2, ep);
      const auto st = solve_from(init, e2);
      us.push_back(st.newton.u);
      vs.push_back(st.v);
      fam[1].push_back(init);
      fam[0].push_back(assemble_on(cubic_exp(0.0, 1.0, N, 1), ep, init.grid));
    }
    const auto rep = accuracy_report(us, vs, fam, eps);
    for (const auto& [k, slope] : rep.u_slopes) EXPECT_GE(slope, k - 0.3) << "N=" << N << " k=" << k;
    for (const auto& [k, slope] : rep.v_slopes) EXPECT_GE(slope, k - 0.3) << "N=" << N << " k=" << k;
  }
}

TEST(Solve, MirroredFamilySwapsBranches) {
  const auto& eq = cubic();
  for (int N : {1, 2}) {
    const auto s = solve_benchmark(N, 2, 0.02, true, 0.2);
    const auto& u = s.state.newton.u;
    EXPECT_LE(s.state.newton.residual, 1e-11);
    EXPECT_LT(std::abs(u(0) - eq.h.h_minus), 0.05);
    EXPECT_LT(std::abs(u(u.size() - 1) - eq.h.h_plus), 0.05);
    EXPECT_LE(s.state.mass_defect, 1e-12);
  }
}

TEST(Solve, GridRefinementIsStable) {
  const auto e = cubic_exp(0.0, 1.0, 2, 2);
  const double eps = 0.02;
  AssembleOptions fine;
  fine.grid.nodes_per_eps = 200;
  fine.grid.coarse_spacing = 0.0025;
  fine.grid.fine_cap_fraction = 1.0 / 400.0;
  const auto a = solve_from(assemble(e, eps), e);
  const auto b = solve_from(assemble(e, eps, fine), e);
  EXPECT_LE(std::abs(a.newton.u.abs().maxCoeff() - b.newton.u.abs().maxCoeff()), 1e-8);
}

TEST(Solve, MoriProblemConverges) {
  const auto& eq = mori();
  const auto e = build_expansion(eq, mori_wave(), eq.v_star + 0.5 * (eq.h.h_plus + eq.h.h_minus), 1.0, 2, 2);
  // Expansion coefficients are large here (a_2 ~ 280), so the asymptotic regime starts near eps ~ 5e-3.
  const auto init = assemble(e, 0.0025);
  const auto st = solve_from(init, e);
  EXPECT_LE(st.newton.residual, 1e-11);
  EXPECT_LE(st.mass_defect, 1e-12);
  EXPECT_LE((st.newton.u - init.u).abs().maxCoeff(), 0.01 * eq.jump());
}
