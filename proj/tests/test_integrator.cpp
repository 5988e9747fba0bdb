#include <gtest/gtest.h>

#include <cmath>

#include "pfrecon/integrator.hpp"
#include "test_common.hpp"

using namespace pfrecon;

TEST(GeneralizedAlpha, ConstantsForRhoHalf) {
  TimeConfig t;
  t.rho_inf = 0.5;
  EXPECT_DOUBLE_EQ(t.alpha_m(), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(t.alpha_f(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(t.gamma(), 2.0 / 3.0);
}

TEST(GeneralizedAlpha, StepCountRequiresDivisibleHorizon) {
  TimeConfig t;
  t.dt = 0.1;
  t.t_end = 15.0;
  EXPECT_EQ(t.steps(), 150);
  t.t_end = 0.25;
  EXPECT_THROW(t.steps(), ConfigError);
  t.dt = 0.0;
  EXPECT_THROW(t.validate(), ConfigError);
}

namespace {

// phi = 0 and spatially uniform sigma, p: the model reduces to
// sigma' = S_h - gamma_h sigma and p' = alpha_h - gamma_p p.
double uniform_decay_error(double dt) {
  auto space = make_space(3, 800.0);
  const auto params = fixtures::small_params();
  GalerkinSystem sys(space, params, SystemKind::Forward);
  StateTriple s(Field(space), Field::constant(space, 2.0), Field::constant(space, 0.0));
  SolverConfig cfg;
  cfg.time.dt = dt;
  cfg.time.t_end = 2.0;
  cfg.newton.tol = 1e-12;
  cfg.newton.abs_tol = 1e-14;
  cfg.gmres.tol = 1e-13;
  const auto traj = solve(sys, s, cfg);
  const auto end = traj.triple(traj.size() - 1);
  const double T = 2.0;
  const double sig = params.S_h / params.gamma_h + (2.0 - params.S_h / params.gamma_h) * std::exp(-params.gamma_h * T);
  const double p = params.alpha_h / params.gamma_p * (1 - std::exp(-params.gamma_p * T));
  double err = 0.0;
  for (std::size_t i = 0; i < space->size(); ++i) {
    EXPECT_EQ(end.u(0)[i], 0.0);
    err = std::max({err, std::abs(end.u(1)[i] - sig), std::abs(end.u(2)[i] - p)});
  }
  return err;
}

}  // namespace

TEST(GeneralizedAlpha, UniformDecayIsSecondOrder) {
  const double e1 = uniform_decay_error(0.2);
  const double e2 = uniform_decay_error(0.1);
  const double e3 = uniform_decay_error(0.05);
  EXPECT_LT(e1, 1e-2);
  EXPECT_NEAR(e1 / e2, 4.0, 0.6);
  EXPECT_NEAR(e2 / e3, 4.0, 0.6);
}

TEST(GeneralizedAlpha, SteadyStateIsPreserved) {
  auto space = make_space(4, 800.0);
  const auto params = fixtures::small_params();
  GalerkinSystem sys(space, params, SystemKind::Forward);
  StateTriple s(Field(space), Field::constant(space, params.S_h / params.gamma_h),
                Field::constant(space, params.alpha_h / params.gamma_p));
  SolverConfig cfg;
  cfg.time.t_end = 1.0;
  const auto traj = solve(sys, s, cfg);
  EXPECT_EQ(traj.size(), 11u);
  const auto end = traj.state(traj.size() - 1);
  for (std::size_t i = 0; i < end.size(); ++i) EXPECT_NEAR(end[i], s.data[i], 1e-12);
}

TEST(GeneralizedAlpha, AdjointTrajectoryIsReturnedInForwardTime) {
  auto space = make_space(4, 800.0);
  const auto params = fixtures::small_params();
  GalerkinSystem fwd(space, params, SystemKind::Forward);
  Field phi = l2_project([](double x, double y) { return fixtures::disc(x, y, 400, 400, 200, 60); }, space, true);
  auto [sig, p] = initial_laws(params, phi);
  SolverConfig cfg;
  cfg.time.t_end = 1.0;
  cfg.time.dt = 0.25;
  const auto F = solve(fwd, StateTriple(phi, sig, p), cfg);
  GalerkinSystem adj(space, params, SystemKind::Adjoint, &F);
  StateTriple qT(space, 1.0);
  for (std::size_t i = 0; i < space->size(); ++i) qT.u(0)[i] = space->dirichlet_mask()[i] ? 0.0 : 1.0;
  const auto Q = solve(adj, qT, cfg);
  ASSERT_EQ(Q.size(), 5u);
  EXPECT_EQ(Q.front_time(), 0.0);
  EXPECT_EQ(Q.back_time(), 1.0);
  const auto last = Q.state(4);
  for (std::size_t i = 0; i < qT.data.size(); ++i) EXPECT_EQ(last[i], qT.data[i]);
}

TEST(GeneralizedAlpha, NewtonFailureThrowsSolverError) {
  auto space = make_space(4, 800.0);
  const auto params = fixtures::small_params();
  GalerkinSystem sys(space, params, SystemKind::Forward);
  Field phi = l2_project([](double x, double y) { return fixtures::disc(x, y, 400, 400, 200, 60); }, space, true);
  auto [sig, p] = initial_laws(params, phi);
  SolverConfig cfg;
  cfg.time.t_end = 1.0;
  cfg.gmres.max_iters = 1;
  cfg.gmres.tol = 1e-12;
  EXPECT_THROW(solve(sys, StateTriple(phi, sig, p), cfg), SolverError);
}
