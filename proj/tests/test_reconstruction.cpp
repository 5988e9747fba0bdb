#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "pfrecon/reconstruction.hpp"
#include "test_common.hpp"

using namespace pfrecon;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SolverConfig tight(double T, double dt) {
  SolverConfig c;
  c.time.t_end = T;
  c.time.dt = dt;
  c.newton.tol = 1e-10;
  c.newton.abs_tol = 1e-14;
  c.newton.block_floor = 0.0;
  c.gmres.tol = 1e-12;
  return c;
}

struct Instance {
  SpacePtr space = make_space(8, 800);
  ModelParams params = fixtures::small_params();
  SolverConfig solver = tight(1.0, 0.1);
  Field truth = truncate_phi0(fixtures::disc_field(space, 400, 400, 200, 60));
  Field meas;
  Instance() {
    GalerkinSystem sys(space, params, SystemKind::Forward);
    auto [s0, p0] = initial_laws(params, truth);
    const Trajectory tr = solve(sys, StateTriple(truth, s0, p0, 0.0), solver);
    meas = tr.triple(tr.size() - 1).field(0);
  }
  Objective objective() const { return Objective(space, params, solver, Measurement{meas}); }
};

}  // namespace

TEST(Convergence, ZeroGradientAndZeroMisfitConverges) {
  ConvergenceState s;
  s.q0_sq = 1;
  s.J0 = 1;
  EXPECT_TRUE(check_convergence(s, 1e-4));
}

TEST(Convergence, BothCriteriaRequired) {
  ConvergenceState s;
  s.q0_sq = 1;
  s.J0 = 1;
  s.q_sq = 1e-6;  // criterion 1 holds
  s.J = 0.5;      // criterion 2 fails
  EXPECT_FALSE(check_convergence(s, 1e-4));
  s.J = 1e-5;
  EXPECT_TRUE(check_convergence(s, 1e-4));
  s.q_sq = 0.5;
  EXPECT_FALSE(check_convergence(s, 1e-4));
}

TEST(Convergence, ChangeTestsNeedPreviousIterate) {
  ConvergenceState s;
  s.q0_sq = s.q_sq = s.qprev_sq = 1;
  s.J0 = s.J = s.Jprev = 1;
  s.dq_sq = 0;
  EXPECT_FALSE(check_convergence(s, 1e-4));
  s.has_prev = true;
  EXPECT_TRUE(check_convergence(s, 1e-4));
  // an increase in J counts through its magnitude
  s.J = 1.5;
  EXPECT_FALSE(check_convergence(s, 1e-4));
  s.J = 1.0 + 5e-5;
  EXPECT_TRUE(check_convergence(s, 1e-4));
}

TEST(Agd, InitialStepUsesLargestMagnitude) {
  const Vector q{0.1, -0.8, 0.4, 0.0};
  EXPECT_DOUBLE_EQ(agd_initial_step(q), 0.2 / 0.8);
  const Vector q2{0.3, 2.5, -1.0};
  EXPECT_DOUBLE_EQ(agd_initial_step(q2), 0.08);
  EXPECT_TRUE(std::isinf(agd_initial_step(Vector{0.0, 0.0})));
}

TEST(Agd, FirstUpdateTakesLocalBranch) {
  // theta^0 = inf leaves only ||dphi|| / (2 ||dq||)
  const auto s = agd_step(0.5, kInf, 3.0, 2.0);
  EXPECT_DOUBLE_EQ(s.mu, 0.75);
  EXPECT_DOUBLE_EQ(s.theta, 1.5);
  EXPECT_FALSE(s.growth_branch);
}

TEST(Agd, GrowthBranchCapsStep) {
  // sqrt(1 + 3) * 0.2 = 0.4 < 10 / (2 * 1)
  const auto s = agd_step(0.2, 3.0, 10.0, 1.0);
  EXPECT_DOUBLE_EQ(s.mu, 0.4);
  EXPECT_DOUBLE_EQ(s.theta, 2.0);
  EXPECT_TRUE(s.growth_branch);
}

TEST(Agd, HandHistory) {
  // three updates with hand-computed steps
  double mu = 0.1, theta = kInf;
  const double dphi[] = {0.4, 0.3, 0.05};
  const double dq[] = {1.0, 0.1, 0.5};
  const double expect_mu[] = {0.2, std::sqrt(3.0) * 0.2, 0.05};
  const bool expect_growth[] = {false, true, false};
  for (int k = 0; k < 3; ++k) {
    const auto s = agd_step(mu, theta, dphi[k], dq[k]);
    EXPECT_NEAR(s.mu, expect_mu[k], 1e-15) << k;
    EXPECT_EQ(s.growth_branch, expect_growth[k]) << k;
    EXPECT_NEAR(s.theta, s.mu / mu, 1e-15);
    mu = s.mu;
    theta = s.theta;
  }
}

TEST(Agd, BothBranchesInactiveIsAnError) { EXPECT_THROW(agd_step(1.0, kInf, 1.0, 0.0), SolverError); }

TEST(Reconstruction, TruncationClampsToUnitInterval) {
  auto s = make_space(4, 1.0);
  Vector c(s->size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = -1.0 + 3.0 * static_cast<double>(i) / (c.size() - 1);
  const Field t = truncate_phi0(Field(s, c));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_DOUBLE_EQ(t[i], std::clamp(c[i], 0.0, 1.0));
}

TEST(Reconstruction, GuessFollowsCentreOfMass) {
  auto s = make_space(32, 800);
  for (auto [cx, cy] : {std::pair{400.0, 400.0}, std::pair{300.0, 450.0}, std::pair{520.0, 330.0}}) {
    const Field m = fixtures::disc_field(s, cx, cy, 120, 10);
    const Field g = initial_guess(m, 80, 80);
    const double mass = integrate(g);
    const Field gx = l2_project([&](double x, double y) { return x * evaluate(g, {x, y}); }, s, false, 2);
    const Field gy = l2_project([&](double x, double y) { return y * evaluate(g, {x, y}); }, s, false, 2);
    EXPECT_NEAR(integrate(gx) / mass, cx, 1.0);
    EXPECT_NEAR(integrate(gy) / mass, cy, 1.0);
    EXPECT_LT(evaluate(g, {cx + 160, cy}), 0.05);
  }
  EXPECT_THROW(initial_guess(Field::constant(s, 0.0), 80, 80), DomainError);
}

TEST(Reconstruction, SdStepOracle) {
  auto s = make_space(6, 1.0);
  StateTriple Y(s, 1.0);
  Vector q(s->size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    q[i] = std::sin(0.3 * i);
    Y.data[i] = std::cos(0.2 * i);
  }
  const double want = l2_inner_product(*s, q, q) / l2_inner_product(*s, Y.u(0), Y.u(0));
  EXPECT_NEAR(sd_step(*s, q, Y, {1, 0, 0}), want, 1e-14 * want);
  StateTriple zero(s, 1.0);
  EXPECT_THROW(sd_step(*s, q, zero, {1, 0, 0}), SolverError);
  EXPECT_EQ(sd_step(*s, Vector(q.size(), 0.0), zero, {1, 0, 0}), 0.0);
}

TEST(Reconstruction, GradientMatchesFiniteDifferences) {
  const Instance in;
  const Objective obj = in.objective();
  const Field phi0 = fixtures::disc_field(in.space, 420, 380, 160, 60);
  const Trajectory fwd = obj.forward(obj.initial_state(phi0));
  const auto [J0, R] = obj.misfit(fwd);
  const Vector g = obj.gradient(obj.adjoint(fwd, R).triple(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto& mask = in.space->dirichlet_mask();
  for (int trial = 0; trial < 5; ++trial) {
    Field h(in.space, Vector(in.space->size(), 0.0));
    for (std::size_t i = 0; i < h.size(); ++i)
      if (!mask[i]) h[i] = n(rng);
    const double eps = 1e-3;
    Field p = phi0;
    for (std::size_t i = 0; i < h.size(); ++i) p[i] += eps * h[i];
    const double fd = (obj.value(p) - J0) / eps;
    const double an = l2_inner_product(*in.space, g, h.coefficients());
    EXPECT_NEAR(fd / an, 1.0, 0.05) << "trial " << trial;
  }
}

// Forward-difference error against <g, h> shrinks at least linearly in eps.
// Small dt keeps the O(dt^2) adjoint mismatch below the eps = 1e-4 error.
TEST(Reconstruction, FiniteDifferenceErrorIsFirstOrder) {
  const Instance in;
  const Objective obj(in.space, in.params, tight(1.0, 0.025), Measurement{in.meas});
  const Field phi0 = fixtures::disc_field(in.space, 420, 380, 160, 60);
  const Trajectory fwd = obj.forward(obj.initial_state(phi0));
  const auto [J0, R] = obj.misfit(fwd);
  const Vector g = obj.gradient(obj.adjoint(fwd, R).triple(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto& mask = in.space->dirichlet_mask();
  for (int trial = 0; trial < 3; ++trial) {
    Field h(in.space, Vector(in.space->size(), 0.0));
    for (std::size_t i = 0; i < h.size(); ++i)
      if (!mask[i]) h[i] = n(rng);
    const double an = l2_inner_product(*in.space, g, h.coefficients());
    std::vector<double> err;
    for (double eps : {1e-2, 1e-3, 1e-4}) {
      Field p = phi0;
      for (std::size_t i = 0; i < h.size(); ++i) p[i] += eps * h[i];
      err.push_back(std::abs((obj.value(p) - J0) / eps - an));
    }
    const double order = std::log10(err[0] / err[2]) / 2.0;
    EXPECT_GE(order, 1.0) << "trial " << trial << " errors " << err[0] << " " << err[1] << " " << err[2];
  }
}

TEST(Reconstruction, ExactGuessStopsImmediately) {
  const Instance in;
  const auto r = reconstruct(in.objective(), in.truth, ReconConfig{});
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.history[0].J, 0.0, 1e-12);
  EXPECT_EQ(r.history[0].mu, 0.0);
}

TEST(Reconstruction, SdDecreasesObjective) {
  const Instance in;
  ReconConfig c;
  c.max_iters = 4;
  const Field guess = fixtures::disc_field(in.space, 400, 400, 140, 60);
  const auto r = reconstruct(in.objective(), guess, c);
  ASSERT_GE(r.history.size(), 2u);
  for (std::size_t k = 1; k < r.history.size(); ++k) EXPECT_LT(r.history[k].J, r.history[k - 1].J);
  for (std::size_t k = 0; k < r.history.size(); ++k) EXPECT_EQ(r.history[k].j, static_cast<int>(k));
  for (double v : r.phi0.coefficients()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Reconstruction, IterationLimitCountsUpdates) {
  const Instance in;
  ReconConfig c;
  c.max_iters = 2;
  c.eps = 1e-30;
  c.method = ReconMethod::AdaptiveGD;
  const Field guess = fixtures::disc_field(in.space, 400, 400, 140, 60);
  int calls = 0;
  const auto r = reconstruct(in.objective(), guess, c, {}, [&](const ReconRecord&, const Field&, const Field&) { ++calls; });
  EXPECT_FALSE(r.converged);
  ASSERT_EQ(r.history.size(), 3u);
  EXPECT_EQ(calls, 3);
  EXPECT_TRUE(std::isinf(r.history[0].theta));
  EXPECT_DOUBLE_EQ(r.history[0].mu, 0.2 / [&] {
    const Objective obj = in.objective();
    const Trajectory fwd = obj.forward(obj.initial_state(truncate_phi0(guess)));
    const Vector g = obj.gradient(obj.adjoint(fwd, obj.misfit(fwd).second).triple(0));
    double m = 0;
    for (double v : g) m = std::max(m, std::abs(v));
    return m;
  }());
  EXPECT_EQ(r.history.back().mu, 0.0);
}

TEST(Reconstruction, KappaNeedsMatchingMeasurement) {
  const Instance in;
  EXPECT_THROW(Objective(in.space, in.params, in.solver, Measurement{in.meas}, {1, 1, 0}), ConfigError);
  EXPECT_THROW(Objective(make_space(4, 800), in.params, in.solver, Measurement{in.meas}), UsageError);
}
