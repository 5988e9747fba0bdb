#pragma once

// Synthetic ground truth: an elliptic tanh tumour grown on a refined mesh,
// the terminal measurement transferred to the working mesh, and seeded
// Gaussian noise on the measurement's control variables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "pfrecon/errors.hpp"
#include "pfrecon/integrator.hpp"
#include "pfrecon/model.hpp"
#include "pfrecon/spline.hpp"
#include "pfrecon/state.hpp"

namespace pfrecon {

struct Ellipse {
  double xc = 0.0;
  double yc = 0.0;
  double a = 150.0;  // semi-axis along x [um]
  double b = 200.0;  // semi-axis along y [um]
  double steepness = 10.0;

  double operator()(double x, double y) const {
    const double r = std::sqrt((x - xc) * (x - xc) / (a * a) + (y - yc) * (y - yc) / (b * b));
    return 0.5 - 0.5 * std::tanh(steepness * (r - 1.0));
  }
};

struct GroundTruthSpec {
  int fine_elements = 64;
  int working_elements = 32;
  double domain_side = 800.0;
  Ellipse ellipse;  // centre defaults to the domain centre when left at (0, 0)

  void validate() const {
    if (working_elements < 2) throw ConfigError("mesh.working_elements", "must be >= 2");
    if (fine_elements < working_elements || fine_elements % working_elements != 0)
      throw ConfigError("mesh.fine_elements", "must be an integer multiple of mesh.working_elements");
    if (!(domain_side > 0.0)) throw ConfigError("mesh.domain_side", "must be > 0");
    if (!(ellipse.a > 0.0)) throw ConfigError("truth.a", "must be > 0");
    if (!(ellipse.b > 0.0)) throw ConfigError("truth.b", "must be > 0");
    if (!(ellipse.steepness > 0.0)) throw ConfigError("truth.steepness", "must be > 0");
  }

  Ellipse centred() const {
    Ellipse e = ellipse;
    if (e.xc == 0.0 && e.yc == 0.0) e.xc = e.yc = 0.5 * domain_side;
    return e;
  }
};

struct GroundTruth {
  Field phi0_fine;
  Field phiT_fine;       // clean measurement on the fine mesh
  Trajectory trajectory;  // reference trajectory on the fine mesh (stride-thinned if requested)
  Field phi0_working;     // phi0 transferred to the working mesh (for metrics only)
  Field phi_meas;         // phiT transferred to the working mesh
};

/// Runs the reference simulation on the fine mesh. When keep_trajectory is
/// false only the t = 0 and t = T snapshots are kept.
inline GroundTruth make_ground_truth(const GroundTruthSpec& spec, const ModelParams& params,
                                     const SolverConfig& cfg, bool keep_trajectory = false,
                                     const StepObserver& observer = {}) {
  spec.validate();
  params.validate();
  auto fine = make_space(spec.fine_elements, spec.domain_side);
  auto working = make_space(spec.working_elements, spec.domain_side);
  const Ellipse e = spec.centred();
  Field phi0 = l2_project(e, fine, true, 2);
  auto [sigma0, p0] = initial_laws(params, phi0);
  GalerkinSystem sys(fine, params, SystemKind::Forward);
  SolveOptions opts;
  opts.store_all = keep_trajectory;
  opts.observer = observer;
  Trajectory traj = solve(sys, StateTriple(phi0, sigma0, p0, 0.0), cfg, opts);
  Field phiT = traj.triple(traj.size() - 1).field(0);
  GroundTruth g{phi0, phiT, std::move(traj), l2_transfer(phi0, working, true), l2_transfer(phiT, working, true)};
  return g;
}

enum class NoiseMode { Multiplicative, Additive };

/// Gaussian noise on control variables above 0.001, then clamped to
/// [0, 1.05]. Multiplicative: c (1 + level xi); additive: c + level max(c) xi.
inline Field add_noise(const Field& phi, double level, std::uint64_t seed,
                       NoiseMode mode = NoiseMode::Multiplicative) {
  if (!(level >= 0.0)) throw ConfigError("noise.level", "must be >= 0");
  Field out = phi;
  if (level == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double cmax = *std::max_element(phi.coefficients().begin(), phi.coefficients().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double c = phi[i];
    if (!(c > 0.001)) continue;
    const double xi = normal(rng);
    const double v = mode == NoiseMode::Multiplicative ? c * (1.0 + level * xi) : c + level * cmax * xi;
    out[i] = std::clamp(v, 0.0, 1.05);
  }
  return out;
}

}  // namespace pfrecon
