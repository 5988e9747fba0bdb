#pragma once

// End-to-end reconstruction run driven by a RunConfig: measurement (from a
// file or the synthetic ground truth, optionally noised), initial guess and
// SD/AGD iterations with metrics against the truth when it is known.

#include <optional>

#include "pfrecon/config.hpp"
#include "pfrecon/io.hpp"
#include "pfrecon/metrics.hpp"
#include "pfrecon/reconstruction.hpp"
#include "pfrecon/synthetic.hpp"

namespace pfrecon {

struct ReconRun {
  std::optional<GroundTruth> truth;  // empty when the measurement came from a file
  Field measurement;                 // as used, on the working mesh
  ReconResult result;
};

inline ReconRun run_reconstruction(const RunConfig& c, const IterationCallback& on_iter = {}) {
  c.validate();
  ReconRun run;
  auto space = make_space(c.truth.working_elements, c.truth.domain_side);
  if (!c.measurement.empty()) {
    Field m = read_field(c.measurement);
    run.measurement = m.space().same_as(*space) ? m : l2_transfer(m, space, true);
  } else {
    run.truth = make_ground_truth(c.truth, c.model, c.solver);
    run.measurement = c.noise.level > 0.0 ? add_noise(run.truth->phi_meas, c.noise.level, c.seed, c.noise.mode)
                                          : run.truth->phi_meas;
  }
  std::optional<MetricsEvaluator> m0, mT;
  ReconReference ref;
  if (run.truth) {
    m0.emplace(run.truth->phi0_fine, *space, c.metrics);
    mT.emplace(run.truth->phiT_fine, *space, c.metrics);
    ref = {&*m0, &*mT};
  }
  Objective obj(space, c.model, c.solver, Measurement{run.measurement}, c.recon.kappa);
  const Field guess = initial_guess(run.measurement, c.guess_a, c.guess_b);
  run.result = reconstruct(obj, guess, c.recon, ref, on_iter);
  return run;
}

}  // namespace pfrecon
