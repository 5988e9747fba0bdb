// pfrecon command-line driver.
//
// Exit codes: 0 success, 2 configuration/format/usage error, 3 solver
// failure, 4 reconstruction stopped at the iteration limit (outputs are
// still written), 1 anything else.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pfrecon/config.hpp"
#include "pfrecon/io.hpp"
#include "pfrecon/metrics.hpp"
#include "pfrecon/pipeline.hpp"
#include "pfrecon/reconstruction.hpp"
#include "pfrecon/synthetic.hpp"

namespace fs = std::filesystem;
using namespace pfrecon;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitNotConverged = 4;

std::mutex g_log_mutex;

void log_line(const std::string& s) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << s << '\n';
}

struct CommonOptions {
  std::vector<std::string> configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int jobs = 1;
  std::optional<double> dump_stride;
};

struct Job {
  RunConfig cfg;
  fs::path out;
  std::string hash;
};

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%09.3f", t);
  return buf;
}

/// True when t sits on a multiple of stride (within a fraction of a step).
bool on_stride(double t, double stride, double dt) {
  if (!(stride > 0.0)) return false;
  const double k = std::round(t / stride);
  return std::abs(t - k * stride) <= 0.25 * std::abs(dt);
}

int run_guarded(const std::string& label, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log_line(label + "configuration error [" + e.key() + "]: " + e.what());
    return kExitConfig;
  } catch (const FormatError& e) {
    log_line(label + "format error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const UsageError& e) {
    log_line(label + "usage error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const DomainError& e) {
    log_line(label + "input error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const SolverError& e) {
    log_line(label + "solver error: " + std::string(e.what()));
    return kExitSolver;
  } catch (const std::exception& e) {
    log_line(label + "error: " + std::string(e.what()));
    return kExitOther;
  }
}

int cmd_ground_truth(const Job& job) {
  const auto& c = job.cfg;
  const fs::path traj_dir = job.out / "trajectory";
  const double stride = c.output.dump_stride;
  auto fine = make_space(c.truth.fine_elements, c.truth.domain_side);
  StepObserver observer;
  if (stride > 0.0) {
    fs::create_directories(traj_dir);
    observer = [&](double t, std::span<const double> U) {
      if (!on_stride(t, stride, c.solver.time.dt)) return;
      const std::size_t nf = fine->size();
      Field phi(fine, Vector(U.begin(), U.begin() + nf));
      Field sig(fine, Vector(U.begin() + nf, U.begin() + 2 * nf));
      Field p(fine, Vector(U.begin() + 2 * nf, U.end()));
      write_vtk(traj_dir / ("truth_" + time_tag(t) + ".vtk"), {{"phi", &phi}, {"sigma", &sig}, {"p", &p}}, job.hash);
    };
  }
  GroundTruth g = make_ground_truth(c.truth, c.model, c.solver, false, observer);
  write_field(job.out / "phi0_ref.pff", g.phi0_fine, job.hash);
  write_field(job.out / "phiT_ref.pff", g.phiT_fine, job.hash);
  write_field(job.out / "phi0_ref_working.pff", g.phi0_working, job.hash);
  write_field(job.out / "phi_meas.pff", g.phi_meas, job.hash);
  write_vtk(job.out / "phi0_ref.vtk", {{"phi0_ref", &g.phi0_fine}}, job.hash);
  write_vtk(job.out / "phi_meas.vtk", {{"phi_meas", &g.phi_meas}}, job.hash);
  if (c.noise.level > 0.0) {
    Field noisy = add_noise(g.phi_meas, c.noise.level, c.seed, c.noise.mode);
    write_field(job.out / "phi_meas_noisy.pff", noisy, job.hash);
  }
  log_line("ground truth written to " + job.out.string() + " (config " + job.hash + ")");
  return kExitOk;
}

int cmd_forward(const Job& job) {
  const auto& c = job.cfg;
  auto space = make_space(c.truth.working_elements, c.truth.domain_side);
  Field phi0 = l2_project(c.truth.centred(), space, true, 2);
  auto [s0, p0] = initial_laws(c.model, phi0);
  GalerkinSystem sys(space, c.model, SystemKind::Forward);
  const fs::path traj_dir = job.out / "trajectory";
  const double stride = c.output.dump_stride;
  SolveOptions opts;
  opts.store_all = false;
  if (stride > 0.0) {
    fs::create_directories(traj_dir);
    opts.observer = [&](double t, std::span<const double> U) {
      if (!on_stride(t, stride, c.solver.time.dt)) return;
      const std::size_t nf = space->size();
      Field phi(space, Vector(U.begin(), U.begin() + nf));
      Field sig(space, Vector(U.begin() + nf, U.begin() + 2 * nf));
      Field p(space, Vector(U.begin() + 2 * nf, U.end()));
      write_vtk(traj_dir / ("forward_" + time_tag(t) + ".vtk"), {{"phi", &phi}, {"sigma", &sig}, {"p", &p}}, job.hash);
    };
  }
  Trajectory tr = solve(sys, StateTriple(phi0, s0, p0), c.solver, opts);
  const StateTriple end = tr.triple(tr.size() - 1);
  write_field(job.out / "phi0.pff", phi0, job.hash);
  write_field(job.out / "phiT.pff", end.field(0), job.hash);
  write_field(job.out / "sigmaT.pff", end.field(1), job.hash);
  write_field(job.out / "pT.pff", end.field(2), job.hash);
  std::ostringstream os;
  os << "forward: V(0)=" << tumour_volume(phi0, c.metrics) << " V(T)=" << tumour_volume(end.field(0), c.metrics)
     << " um^2 (config " << job.hash << ")";
  log_line(os.str());
  return kExitOk;
}

int cmd_reconstruct(const Job& job) {
  const auto& c = job.cfg;
  HistoryWriter history(job.out / "history.csv", job.hash);
  const int stride = static_cast<int>(std::lround(c.output.dump_stride));
  const ReconRun run = run_reconstruction(c, [&](const ReconRecord& r, const Field& phi0, const Field&) {
    history.append(r);
    if (stride > 0 && r.j % stride == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%04d.pff", r.j);
      write_field(job.out / "iterates" / name, phi0, job.hash);
    }
  });
  const ReconResult& res = run.result;
  write_field(job.out / "phi0_rec.pff", res.phi0, job.hash);
  write_field(job.out / "phiT_rec.pff", res.phiT, job.hash);
  write_vtk(job.out / "phi0_rec.vtk", {{"phi0_rec", &res.phi0}, {"phiT_rec", &res.phiT}}, job.hash);
  const auto& last = res.history.back();
  std::ostringstream os;
  os << "reconstruct " << to_string(c.recon.method) << ": " << (res.converged ? "converged" : "stopped at limit")
     << " after " << last.j << " updates, J=" << format_number(last.J);
  if (last.metrics0) os << ", DSC_0=" << last.metrics0->dsc << ", e_V0=" << last.metrics0->e_V;
  if (last.metricsT) os << ", DSC_T=" << last.metricsT->dsc;
  os << " (config " << job.hash << ")";
  log_line(os.str());
  return res.converged ? kExitOk : kExitNotConverged;
}

int run_jobs(const CommonOptions& o, const std::function<int(const Job&)>& cmd) {
  std::vector<Job> jobs;
  for (const auto& path : o.configs) {
    Job j;
    j.cfg = load_config(path);
    if (o.seed) j.cfg.seed = *o.seed;
    if (o.dump_stride) j.cfg.output.dump_stride = *o.dump_stride;
    // measurement paths are relative to the config file
    if (!j.cfg.measurement.empty() && fs::path(j.cfg.measurement).is_relative())
      j.cfg.measurement = (fs::path(path).parent_path() / j.cfg.measurement).string();
    j.cfg.validate();
    fs::path out = o.out ? fs::path(*o.out) : fs::path(j.cfg.output.dir);
    if (o.configs.size() > 1) out /= fs::path(path).stem();
    j.out = out;
    j.hash = config_hash(j.cfg);
    jobs.push_back(std::move(j));
  }
  std::vector<int> codes(jobs.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const std::string label = jobs.size() > 1 ? "[" + o.configs[i] + "] " : "";
      codes[i] = run_guarded(label, [&] {
        fs::create_directories(jobs[i].out);
        return cmd(jobs[i]);
      });
    }
  };
  const int nthreads = std::max(1, std::min<int>(o.jobs, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return *std::max_element(codes.begin(), codes.end());
}

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.configs, "INI configuration file (repeat for several scenarios)")->required();
  app->add_option("--seed", o.seed, "noise seed (overrides run.seed)");
  app->add_option("--out", o.out, "output directory (overrides output.dir)");
  app->add_option("--jobs", o.jobs, "scenarios run in parallel")->check(CLI::PositiveNumber);
  app->add_option("--dump-stride", o.dump_stride, "days between trajectory dumps, or iterations between iterate dumps")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initial tumour state reconstruction for a phase-field prostate cancer model"};
  app.require_subcommand(1);

  CommonOptions gt_opts, rec_opts, fwd_opts;
  auto* gt = app.add_subcommand("ground-truth", "reference simulation on the fine mesh and terminal measurement");
  add_common(gt, gt_opts);
  auto* rec = app.add_subcommand("reconstruct", "reconstruct phi0 from the terminal measurement");
  add_common(rec, rec_opts);
  auto* fwd = app.add_subcommand("forward", "plain forward solve from the configured ellipse");
  add_common(fwd, fwd_opts);

  std::string ref_path, rec_path;
  std::optional<std::string> metrics_out, metrics_config;
  auto* met = app.add_subcommand("metrics", "compare two field files");
  met->add_option("reference", ref_path, "reference field file")->required();
  met->add_option("reconstruction", rec_path, "reconstructed field file")->required();
  met->add_option("--out", metrics_out, "directory for metrics.csv");
  met->add_option("--config", metrics_config, "config supplying [metrics] options");

  std::string noise_in, noise_out;
  double noise_level = 0.1;
  std::uint64_t noise_seed = 0;
  std::string noise_mode = "multiplicative";
  auto* noi = app.add_subcommand("noise", "add seeded Gaussian noise to a field file");
  noi->add_option("input", noise_in, "input field file")->required();
  noi->add_option("output", noise_out, "output field file")->required();
  noi->add_option("--level", noise_level, "relative noise level")->check(CLI::NonNegativeNumber);
  noi->add_option("--seed", noise_seed, "random seed");
  noi->add_option("--mode", noise_mode, "multiplicative or additive")
      ->check(CLI::IsMember({"multiplicative", "additive"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*gt) return run_guarded("", [&] { return run_jobs(gt_opts, cmd_ground_truth); });
  if (*rec) return run_guarded("", [&] { return run_jobs(rec_opts, cmd_reconstruct); });
  if (*fwd) return run_guarded("", [&] { return run_jobs(fwd_opts, cmd_forward); });
  if (*met)
    return run_guarded("", [&] {
      MetricsOptions mo;
      if (metrics_config) mo = load_config(*metrics_config).metrics;
      const Field a = read_field(ref_path);
      const Field b = read_field(rec_path);
      const MetricsReport r = metrics(a, b, mo);
      std::cout << "e_V,dsc,e_L2,ccc\n"
                << format_number(r.e_V) << ',' << format_number(r.dsc) << ',' << format_number(r.e_L2) << ','
                << format_number(r.ccc) << '\n';
      if (metrics_out) {
        fs::create_directories(*metrics_out);
        std::ofstream f(fs::path(*metrics_out) / "metrics.csv", std::ios::binary);
        f << "e_V,dsc,e_L2,ccc\n"
          << format_number(r.e_V) << ',' << format_number(r.dsc) << ',' << format_number(r.e_L2) << ','
          << format_number(r.ccc) << '\n';
      }
      return kExitOk;
    });
  if (*noi)
    return run_guarded("", [&] {
      const Field in = read_field(noise_in);
      const auto mode = noise_mode == "additive" ? NoiseMode::Additive : NoiseMode::Multiplicative;
      write_field(noise_out, add_noise(in, noise_level, noise_seed, mode));
      return kExitOk;
    });
  return kExitOther;
}
