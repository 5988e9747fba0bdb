#pragma once

// Generalized-alpha time stepping for first-order systems with
// Newton-Raphson corrections. Backward (adjoint) solves use the same
// recursions with a negative time step.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/linalg.hpp"
#include "pfrecon/state.hpp"
#include "pfrecon/systems.hpp"

namespace pfrecon {

struct TimeConfig {
  double dt = 0.1;  // days; magnitude of the step, the adjoint runs with -dt
  double t_end = 0.0;
  double rho_inf = 0.5;

  double alpha_m() const noexcept { return 0.5 * (3.0 - rho_inf) / (1.0 + rho_inf); }
  double alpha_f() const noexcept { return 1.0 / (1.0 + rho_inf); }
  // 1/2 + alpha_m - alpha_f, which simplifies to 1 / (1 + rho_inf)
  double gamma() const noexcept { return 1.0 / (1.0 + rho_inf); }

  /// Number of steps; t_end must be an integer multiple of |dt|.
  int steps() const {
    validate();
    return static_cast<int>(std::llround(t_end / std::abs(dt)));
  }

  void validate() const {
    if (!(std::abs(dt) > 0.0)) throw ConfigError("time.dt", "must be nonzero");
    if (!(t_end >= 0.0)) throw ConfigError("time.t_end", "must be >= 0");
    if (!(rho_inf >= 0.0 && rho_inf <= 1.0)) throw ConfigError("time.rho_inf", "must lie in [0, 1]");
    const double n = t_end / std::abs(dt);
    if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n))
      throw ConfigError("time.t_end", "must be an integer multiple of |dt|");
  }
};

struct NewtonConfig {
  double tol = 1e-3;  // per-block reduction relative to the initial residual
  int max_iters = 10;
  /// Blocks whose norm falls below this are treated as converged (covers
  /// blocks that start at round-off level).
  double abs_tol = 1e-9;
  /// A block is measured against at least block_floor times the largest
  /// initial block norm. Blocks that start orders of magnitude below the
  /// others cannot be reduced further by a GMRES tolerance on the coupled
  /// system; 0 gives the plain per-block test.
  double block_floor = 1e-3;

  void validate() const {
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("newton.tol", "must lie in (0, 1)");
    if (max_iters < 1) throw ConfigError("newton.max_iters", "must be >= 1");
    if (!(abs_tol >= 0.0)) throw ConfigError("newton.abs_tol", "must be >= 0");
    if (!(block_floor >= 0.0 && block_floor <= 1.0)) throw ConfigError("newton.block_floor", "must lie in [0, 1]");
  }
};

struct SolverConfig {
  TimeConfig time;
  NewtonConfig newton;
  GmresConfig gmres;
};

struct StepStats {
  int newton_iterations = 0;
  int gmres_iterations = 0;
};

class TimeStepper {
 public:
  TimeStepper(const GalerkinSystem& sys, SolverConfig cfg)
      : sys_(sys), cfg_(std::move(cfg)), J_(sys.make_matrix()) {
    cfg_.newton.validate();
    cfg_.gmres.validate();
  }

  const SolverConfig& config() const noexcept { return cfg_; }

  /// Udot such that Res(Udot, U) = 0 at time t. The residual is affine in
  /// Udot with block-diagonal mass, so this is one mass solve per field.
  Vector consistent_rate(std::span<const double> U, double t) const {
    const std::size_t nf = sys_.space().size();
    Vector zero(sys_.size(), 0.0);
    Vector R = sys_.residual(U, zero, t);
    Vector V(sys_.size(), 0.0);
    const double tau = sys_.time_sign();
    for (int f = 0; f < 3; ++f) {
      Vector rhs(nf);
      for (std::size_t i = 0; i < nf; ++i) rhs[i] = -R[f * nf + i] / tau;
      const Vector v = solve_mass(sys_.space(), rhs, f == 0);
      std::copy(v.begin(), v.end(), V.begin() + static_cast<std::ptrdiff_t>(f * nf));
    }
    return V;
  }

  /// Advances (U, V) from time t to t + dt (dt may be negative).
  StepStats step(Vector& U, Vector& V, double t, double dt) {
    const double am = cfg_.time.alpha_m(), af = cfg_.time.alpha_f(), gm = cfg_.time.gamma();
    const std::size_t n = sys_.size();
    const std::size_t nf = sys_.space().size();
    // constant-U predictor
    Vector Un = U, Vn = V;
    for (std::size_t i = 0; i < n; ++i) V[i] = (gm - 1.0) / gm * Vn[i];
    Uaf_.resize(n);
    Vam_.resize(n);
    R_.resize(n);
    const double t_af = t + af * dt;
    const double shift = am / (af * gm * dt);
    StepStats stats;
    std::array<double, 3> init{}, cur{}, ref{};
    for (int it = 0;; ++it) {
      for (std::size_t i = 0; i < n; ++i) {
        Uaf_[i] = Un[i] + af * (U[i] - Un[i]);
        Vam_[i] = Vn[i] + am * (V[i] - Vn[i]);
      }
      sys_.residual(Uaf_, Vam_, t_af, R_);
      for (int f = 0; f < 3; ++f) cur[f] = norm2(std::span<const double>(R_).subspan(f * nf, nf));
      if (it == 0) {
        init = cur;
        const double largest = std::max({init[0], init[1], init[2]});
        for (int f = 0; f < 3; ++f) ref[f] = std::max(init[f], cfg_.newton.block_floor * largest);
      }
      bool converged = true;
      for (int f = 0; f < 3; ++f)
        if (!(cur[f] <= cfg_.newton.tol * ref[f] || cur[f] <= cfg_.newton.abs_tol)) converged = false;
      if (converged) break;
      if (it == cfg_.newton.max_iters) {
        std::ostringstream os;
        os << to_string(sys_.kind()) << " Newton did not converge at t=" << t + dt << " after "
           << it << " iterations; block residuals " << cur[0] << ", " << cur[1] << ", " << cur[2]
           << " (initial " << init[0] << ", " << init[1] << ", " << init[2] << ")";
        throw SolverError(os.str());
      }
      // linear systems: the tangent does not depend on the iterate
      if (it == 0 || sys_.kind() == SystemKind::Forward) sys_.tangent(Uaf_, Vam_, t_af, shift, J_);
      for (std::size_t i = 0; i < n; ++i) R_[i] = -R_[i] / af;
      GmresResult g = gmres_solve(J_, R_, cfg_.gmres);
      stats.gmres_iterations += g.iterations;
      if (!g.converged) {
        std::ostringstream os;
        os << to_string(sys_.kind()) << " GMRES did not converge at t=" << t + dt << ": residual "
           << g.preconditioned_residual << " after " << g.iterations << " iterations";
        throw SolverError(os.str());
      }
      for (std::size_t i = 0; i < n; ++i) {
        U[i] += g.x[i];
        V[i] += g.x[i] / (gm * dt);
      }
      ++stats.newton_iterations;
    }
    return stats;
  }

 private:
  const GalerkinSystem& sys_;
  SolverConfig cfg_;
  SparseMatrix J_;
  Vector Uaf_, Vam_, R_;
};

/// Called after every accepted time level with (t, U).
using StepObserver = std::function<void(double, std::span<const double>)>;

struct SolveOptions {
  /// false keeps only the first and last snapshot (enough when nothing
  /// replays the trajectory).
  bool store_all = true;
  StepObserver observer;
};

/// Integrates a system over [0, T]. Forward and linearised systems start from
/// `start` at t = 0; the adjoint starts from its terminal datum at t = T and
/// runs backwards. The returned trajectory is always in increasing time.
inline Trajectory solve(const GalerkinSystem& sys, const StateTriple& start, const SolverConfig& cfg,
                        const SolveOptions& opts = {}) {
  const int nsteps = cfg.time.steps();
  const double dt = std::abs(cfg.time.dt);
  const double T = cfg.time.t_end;
  const bool backward = sys.kind() == SystemKind::Adjoint;
  if (!start.space->same_as(sys.space())) throw UsageError("solve: start state in a different space");

  TimeStepper stepper(sys, cfg);
  Vector U = start.data;
  const std::size_t nf = sys.space().size();
  for (std::size_t i = 0; i < nf; ++i)
    if (sys.constrained()[i]) U[i] = 0.0;
  const double t0 = backward ? T : 0.0;
  Vector V = stepper.consistent_rate(U, t0);

  Trajectory traj(sys.space_ptr());
  traj.push_back(t0, U, V);
  if (opts.observer) opts.observer(t0, U);
  for (int k = 0; k < nsteps; ++k) {
    const double t = backward ? T - k * dt : k * dt;
    const double t_next = (k + 1 == nsteps) ? (backward ? 0.0 : T) : (backward ? T - (k + 1) * dt : (k + 1) * dt);
    try {
      stepper.step(U, V, t, t_next - t);
    } catch (const SolverError& e) {
      throw SolverError(std::string(e.what()) + " [step " + std::to_string(k + 1) + " of " +
                        std::to_string(nsteps) + "]");
    }
    if (opts.store_all || k + 1 == nsteps) traj.push_back(t_next, U, V);
    if (opts.observer) opts.observer(t_next, U);
  }
  if (backward) traj.reverse();
  return traj;
}

}  // namespace pfrecon
