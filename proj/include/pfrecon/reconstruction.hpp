#pragma once

// Initial-data identification: Landweber steepest descent (SD) and adaptive
// gradient descent (AGD).
//
// One iteration j evaluates the forward model from phi0^j, the misfit
// R = u(T) - u_meas and the adjoint with terminal data kappa_i R_i. Since
// sigma0 and p0 follow phi0 through the initial laws, the gradient direction
// is g = q(0) + c1_sigma z(0) + c1_p r(0), restricted to the free
// coefficients. The convergence test runs before the step, so the returned
// field is the last evaluated iterate.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/integrator.hpp"
#include "pfrecon/metrics.hpp"
#include "pfrecon/model.hpp"
#include "pfrecon/spline.hpp"
#include "pfrecon/state.hpp"
#include "pfrecon/systems.hpp"

namespace pfrecon {

enum class ReconMethod { LandweberSD, AdaptiveGD };

inline const char* to_string(ReconMethod m) {
  return m == ReconMethod::LandweberSD ? "LandweberSD" : "AdaptiveGD";
}

struct ReconConfig {
  ReconMethod method = ReconMethod::LandweberSD;
  double eps = 1e-4;
  /// Number of updates allowed; iterates 0..max_iters are evaluated.
  int max_iters = 500;
  std::array<double, 3> kappa{1.0, 0.0, 0.0};
  /// Constant step in place of the SD step (plain Landweber); 0 disables.
  double fixed_step = 0.0;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("recon.eps", "must be > 0");
    if (max_iters < 0) throw ConfigError("recon.max_iters", "must be >= 0");
    for (double k : kappa)
      if (!(k >= 0.0)) throw ConfigError("recon.kappa", "components must be >= 0");
    if (kappa[0] + kappa[1] + kappa[2] <= 0.0) throw ConfigError("recon.kappa", "must not be all zero");
    if (!(fixed_step >= 0.0)) throw ConfigError("recon.fixed_step", "must be >= 0");
  }
};

struct ReconRecord {
  int j = 0;
  double mu = 0.0;
  double theta = std::numeric_limits<double>::quiet_NaN();
  double J = 0.0;
  double grad_norm = 0.0;
  std::optional<MetricsReport> metrics0;
  std::optional<MetricsReport> metricsT;
};

struct ReconResult {
  Field phi0;
  Field phiT;
  std::vector<ReconRecord> history;
  bool converged = false;
};

/// Terminal data; sigma and p are only needed when their kappa weight is
/// nonzero.
struct Measurement {
  Field phi;
  std::optional<Field> sigma;
  std::optional<Field> p;
};

/// Ground truth for per-iteration metrics (optional).
struct ReconReference {
  const MetricsEvaluator* at0 = nullptr;
  const MetricsEvaluator* atT = nullptr;
};

/// Per-iteration hook: the record and the iterate it describes.
using IterationCallback = std::function<void(const ReconRecord&, const Field& phi0, const Field& phiT)>;

/// Clamps coefficients to [0, 1].
inline Field truncate_phi0(const Field& f) {
  Field out = f;
  for (double& c : out.coefficients()) c = std::clamp(c, 0.0, 1.0);
  return out;
}

/// Inputs of the two-part stopping test.
struct ConvergenceState {
  double q0_sq = 0.0;     // ||q^0||^2
  double q_sq = 0.0;      // ||q^j||^2
  double qprev_sq = 0.0;  // ||q^{j-1}||^2
  double dq_sq = 0.0;     // ||q^j - q^{j-1}||^2
  double J0 = 0.0;
  double J = 0.0;
  double Jprev = 0.0;
  bool has_prev = false;  // false at j = 0: only the absolute sub-tests apply
};

/// Criterion 1 AND criterion 2, each the OR of an absolute and a relative
/// change test. The change test on J uses |J^j - J^{j-1}|.
inline bool check_convergence(const ConvergenceState& s, double eps) {
  const bool c1 = s.q_sq <= eps * s.q0_sq || (s.has_prev && s.dq_sq <= eps * s.qprev_sq);
  const bool c2 = s.J <= eps * s.J0 || (s.has_prev && std::abs(s.J - s.Jprev) <= eps * s.Jprev);
  return c1 && c2;
}

/// AGD seed step 0.2 / q_M, q_M the largest coefficient magnitude of q.
inline double agd_initial_step(std::span<const double> q) {
  double qm = 0.0;
  for (double v : q) qm = std::max(qm, std::abs(v));
  return qm > 0.0 ? 0.2 / qm : std::numeric_limits<double>::infinity();
}

struct AgdStep {
  double mu;
  double theta;
  bool growth_branch;  // true when sqrt(1 + theta) mu_prev was the minimum
};

/// mu = min(sqrt(1 + theta_prev) mu_prev, ||dphi|| / (2 ||dq||)); theta = mu / mu_prev.
/// theta_prev = +inf disables the growth branch; dq = 0 disables the second.
inline AgdStep agd_step(double mu_prev, double theta_prev, double dphi_norm, double dq_norm) {
  const double growth = std::isinf(theta_prev) ? std::numeric_limits<double>::infinity()
                                               : std::sqrt(1.0 + theta_prev) * mu_prev;
  const double local = dq_norm > 0.0 ? dphi_norm / (2.0 * dq_norm) : std::numeric_limits<double>::infinity();
  AgdStep s{};
  s.growth_branch = growth <= local;
  s.mu = std::min(growth, local);
  if (!std::isfinite(s.mu)) throw SolverError("AGD step size is not finite (both branches inactive)");
  s.theta = s.mu / mu_prev;
  return s;
}

/// Small disc or ellipse guess centred at the centre of mass of phi_meas.
inline Field initial_guess(const Field& phi_meas, double a, double b, double steepness = 10.0) {
  const auto& s = phi_meas.space();
  double m0 = 0.0, mx = 0.0, my = 0.0;
  const int E = s.elements_per_side();
  const int nq = s.quadrature().points_per_direction;
  for (int ey = 0; ey < E; ++ey)
    for (int ex = 0; ex < E; ++ex)
      for (int qy = 0; qy < nq; ++qy)
        for (int qx = 0; qx < nq; ++qx) {
          const double x = s.qp_coord(ex, qx), y = s.qp_coord(ey, qy);
          const double w = s.qp_weight(qx) * s.qp_weight(qy);
          const double v = evaluate(phi_meas, {x, y});
          m0 += w * v;
          mx += w * x * v;
          my += w * y * v;
        }
  if (!(m0 > 0.0)) throw DomainError("initial_guess: measurement has non-positive integral");
  const double xc = mx / m0, yc = my / m0;
  auto f = [=](double x, double y) {
    const double r = std::sqrt((x - xc) * (x - xc) / (a * a) + (y - yc) * (y - yc) / (b * b));
    return 0.5 - 0.5 * std::tanh(steepness * (r - 1.0));
  };
  return l2_project(f, phi_meas.space_ptr(), true, 2);
}

/// Objective, forward trajectory and adjoint for one phi0. Also used by the
/// gradient tests.
class Objective {
 public:
  Objective(SpacePtr space, ModelParams params, SolverConfig solver, Measurement meas,
            std::array<double, 3> kappa = {1.0, 0.0, 0.0})
      : space_(std::move(space)), params_(std::move(params)), solver_(std::move(solver)),
        meas_(std::move(meas)), kappa_(kappa) {
    params_.validate();
    if (!meas_.phi.space().same_as(*space_))
      throw UsageError("Objective: measurement must live in the working space");
    if (kappa_[1] > 0.0 && !meas_.sigma) throw ConfigError("recon.kappa", "kappa_2 > 0 needs a sigma measurement");
    if (kappa_[2] > 0.0 && !meas_.p) throw ConfigError("recon.kappa", "kappa_3 > 0 needs a p measurement");
  }

  const SpacePtr& space() const noexcept { return space_; }
  const ModelParams& params() const noexcept { return params_; }
  const SolverConfig& solver() const noexcept { return solver_; }
  const std::array<double, 3>& kappa() const noexcept { return kappa_; }

  /// Initial triple from phi0 through the initial laws.
  StateTriple initial_state(const Field& phi0) const {
    auto [s0, p0] = initial_laws(params_, phi0);
    return StateTriple(phi0, s0, p0, 0.0);
  }

  Trajectory forward(const StateTriple& start) const {
    GalerkinSystem sys(space_, params_, SystemKind::Forward);
    return solve(sys, start, solver_);
  }

  /// 1/2 sum_i kappa_i ||u_i(T) - m_i||^2 and the misfit triple.
  std::pair<double, StateTriple> misfit(const Trajectory& fwd) const {
    StateTriple R = fwd.triple(fwd.size() - 1);
    const Field* m[3] = {&meas_.phi, meas_.sigma ? &*meas_.sigma : nullptr, meas_.p ? &*meas_.p : nullptr};
    double J = 0.0;
    for (int i = 0; i < 3; ++i) {
      auto u = R.u(i);
      if (kappa_[i] == 0.0) {
        std::fill(u.begin(), u.end(), 0.0);
        continue;
      }
      for (std::size_t k = 0; k < u.size(); ++k) u[k] -= (*m[i])[k];
      J += 0.5 * kappa_[i] * l2_inner_product(*space_, u, u);
    }
    return {J, R};
  }

  /// Adjoint trajectory (forward time order) for the given misfit.
  Trajectory adjoint(const Trajectory& fwd, const StateTriple& misfit) const {
    StateTriple terminal(space_, solver_.time.t_end);
    for (int i = 0; i < 3; ++i) {
      auto src = misfit.u(i);
      auto dst = terminal.u(i);
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = kappa_[i] * src[k];
    }
    GalerkinSystem sys(space_, params_, SystemKind::Adjoint, &fwd);
    return solve(sys, terminal, solver_);
  }

  /// Linearised solve from a seed; returns the terminal state.
  StateTriple linearised_terminal(const Trajectory& fwd, const StateTriple& seed) const {
    GalerkinSystem sys(space_, params_, SystemKind::Linearised, &fwd);
    SolveOptions opts;
    opts.store_all = false;
    const Trajectory Y = solve(sys, seed, solver_, opts);
    return Y.triple(Y.size() - 1);
  }

  /// Reduced gradient from the adjoint state at t = 0 (constrained entries zero).
  Vector gradient(const StateTriple& adj0) const {
    const auto q = adj0.u(0), z = adj0.u(1), r = adj0.u(2);
    const auto& mask = space_->dirichlet_mask();
    Vector g(q.size());
    for (std::size_t k = 0; k < g.size(); ++k)
      g[k] = mask[k] ? 0.0 : q[k] + *params_.c1_sigma * z[k] + *params_.c1_p * r[k];
    return g;
  }

  /// Perturbation of the initial triple induced by a phi0 direction.
  StateTriple seed(std::span<const double> dphi0) const {
    StateTriple s(space_, 0.0);
    for (std::size_t k = 0; k < dphi0.size(); ++k) {
      s.data[k] = dphi0[k];
      s.data[dphi0.size() + k] = *params_.c1_sigma * dphi0[k];
      s.data[2 * dphi0.size() + k] = *params_.c1_p * dphi0[k];
    }
    return s;
  }

  /// Objective value only.
  double value(const Field& phi0) const { return misfit(forward(initial_state(phi0))).first; }

 private:
  SpacePtr space_;
  ModelParams params_;
  SolverConfig solver_;
  Measurement meas_;
  std::array<double, 3> kappa_;
};

/// SD step ||q||^2 / sum_i kappa_i ||Y_i(T)||^2.
inline double sd_step(const SplineSpace& s, std::span<const double> q, const StateTriple& YT,
                      const std::array<double, 3>& kappa) {
  const double num = l2_inner_product(s, q, q);
  double den = 0.0;
  for (int i = 0; i < 3; ++i)
    if (kappa[i] > 0.0) den += kappa[i] * l2_inner_product(s, YT.u(i), YT.u(i));
  if (num == 0.0) return 0.0;
  if (!(den > 0.0)) throw SolverError("SD step size undefined: ||Y(T)|| = 0 with nonzero gradient");
  const double mu = num / den;
  if (!std::isfinite(mu)) throw SolverError("SD step size is not finite");
  return mu;
}

/// Runs SD or AGD from phi0_guess (clamped to [0, 1] first).
inline ReconResult reconstruct(const Objective& obj, const Field& phi0_guess, const ReconConfig& cfg,
                               const ReconReference& ref = {}, const IterationCallback& on_iter = {}) {
  cfg.validate();
  const auto& space = *obj.space();
  const std::size_t nf = space.size();
  ReconResult result;
  Field phi0 = truncate_phi0(phi0_guess);
  Field phi0_prev;
  Vector q_prev;
  ConvergenceState cs;
  double mu_prev = 0.0, theta_prev = std::numeric_limits<double>::infinity();

  for (int j = 0;; ++j) {
    const StateTriple start = obj.initial_state(phi0);
    Trajectory fwd;
    Trajectory adj;
    double J = 0.0;
    try {
      fwd = obj.forward(start);
      auto [Jv, R] = obj.misfit(fwd);
      J = Jv;
      adj = obj.adjoint(fwd, R);
    } catch (const SolverError& e) {
      throw SolverError("iteration " + std::to_string(j) + ": " + e.what());
    }
    const StateTriple adj0 = adj.triple(0);
    const Vector q = obj.gradient(adj0);
    const double q_sq = l2_inner_product(space, q, q);
    Field phiT = fwd.triple(fwd.size() - 1).field(0);

    ReconRecord rec;
    rec.j = j;
    rec.J = J;
    rec.grad_norm = std::sqrt(q_sq);
    if (ref.at0) rec.metrics0 = (*ref.at0)(phi0);
    if (ref.atT) rec.metricsT = (*ref.atT)(phiT);

    // stopping test
    cs.J = J;
    cs.q_sq = q_sq;
    if (j == 0) {
      cs.J0 = J;
      cs.q0_sq = q_sq;
      cs.has_prev = false;
    } else {
      double dq = 0.0;
      Vector d(nf);
      for (std::size_t k = 0; k < nf; ++k) d[k] = q[k] - q_prev[k];
      dq = l2_inner_product(space, d, d);
      cs.dq_sq = dq;
      cs.has_prev = true;
    }
    const bool converged = check_convergence(cs, cfg.eps) || q_sq == 0.0;
    auto finish = [&](bool ok) {
      rec.mu = 0.0;
      result.history.push_back(rec);
      if (on_iter) on_iter(rec, phi0, phiT);
      result.phi0 = phi0;
      result.phiT = phiT;
      result.converged = ok;
      return result;
    };
    if (converged) return finish(true);
    if (j == cfg.max_iters) return finish(false);

    // step size
    double mu = 0.0;
    if (cfg.fixed_step > 0.0) {
      mu = cfg.fixed_step;
    } else if (cfg.method == ReconMethod::LandweberSD) {
      StateTriple YT;
      try {
        YT = obj.linearised_terminal(fwd, obj.seed(q));
      } catch (const SolverError& e) {
        throw SolverError("iteration " + std::to_string(j) + ": " + e.what());
      }
      mu = sd_step(space, q, YT, obj.kappa());
    } else if (j == 0) {
      mu = agd_initial_step(q);
      rec.theta = std::numeric_limits<double>::infinity();
    } else {
      Vector dphi(nf), dq(nf);
      for (std::size_t k = 0; k < nf; ++k) {
        dphi[k] = phi0[k] - phi0_prev[k];
        dq[k] = q[k] - q_prev[k];
      }
      const AgdStep s = agd_step(mu_prev, theta_prev, l2_norm(space, dphi), l2_norm(space, dq));
      mu = s.mu;
      rec.theta = s.theta;
    }
    if (!std::isfinite(mu)) throw SolverError("iteration " + std::to_string(j) + ": step size is not finite");
    rec.mu = mu;
    result.history.push_back(rec);
    if (on_iter) on_iter(rec, phi0, phiT);

    mu_prev = mu;
    if (cfg.method == ReconMethod::AdaptiveGD) theta_prev = rec.theta;
    cs.Jprev = J;
    cs.qprev_sq = q_sq;
    q_prev = q;
    phi0_prev = phi0;
    Field next = phi0;
    for (std::size_t k = 0; k < nf; ++k) next[k] -= mu * q[k];
    phi0 = truncate_phi0(next);
  }
}

}  // namespace pfrecon
