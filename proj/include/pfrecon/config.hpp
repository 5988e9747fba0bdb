#pragma once

// Run configuration read from INI files (one level of sections).
//
// Every key is validated individually; errors carry the dotted key name.
// Unknown keys are rejected so that typos do not silently fall back to
// defaults.

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pfrecon/errors.hpp"
#include "pfrecon/integrator.hpp"
#include "pfrecon/metrics.hpp"
#include "pfrecon/model.hpp"
#include "pfrecon/reconstruction.hpp"
#include "pfrecon/synthetic.hpp"

namespace pfrecon {

struct NoiseConfig {
  double level = 0.0;  // 0 disables
  NoiseMode mode = NoiseMode::Multiplicative;
};

struct OutputConfig {
  std::string dir = "out";
  /// Days between trajectory dumps, or iterations between iterate dumps; 0 disables.
  double dump_stride = 0.0;
};

struct RunConfig {
  ModelParams model;
  GroundTruthSpec truth;
  SolverConfig solver;
  ReconConfig recon;
  double guess_a = 100.0;
  double guess_b = 100.0;
  /// Optional measurement file; when empty the synthetic ground truth is used.
  std::string measurement;
  NoiseConfig noise;
  MetricsOptions metrics;
  OutputConfig output;
  std::uint64_t seed = 0;

  void validate() const {
    model.validate();
    truth.validate();
    solver.time.validate();
    solver.newton.validate();
    solver.gmres.validate();
    recon.validate();
    // run files carry phi measurements only
    if (recon.kappa[1] != 0.0 || recon.kappa[2] != 0.0)
      throw ConfigError("recon.kappa", "only the phi component can be weighted (sigma and p are not measured)");
    if (!(guess_a > 0.0)) throw ConfigError("recon.guess_a", "must be > 0");
    if (!(guess_b > 0.0)) throw ConfigError("recon.guess_b", "must be > 0");
    if (!(noise.level >= 0.0)) throw ConfigError("noise.level", "must be >= 0");
    if (metrics.cells_per_side < 0) throw ConfigError("metrics.cells_per_side", "must be >= 0");
    if (metrics.points_per_cell < 1 || metrics.points_per_cell > 20)
      throw ConfigError("metrics.points_per_cell", "must lie in 1..20");
    if (!(output.dump_stride >= 0.0)) throw ConfigError("output.dump_stride", "must be >= 0");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& t) : tree_(t) {}

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    std::string s = *v;
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  void number(const std::string& key, double& out, bool required = false) {
    auto s = raw(key);
    if (!s) {
      if (required) throw ConfigError(key, "required entry missing");
      return;
    }
    out = parse_double(key, *s);
  }

  void number(const std::string& key, std::optional<double>& out) {
    auto s = raw(key);
    if (s) out = parse_double(key, *s);
  }

  void integer(const std::string& key, int& out) {
    auto s = raw(key);
    if (!s) return;
    try {
      std::size_t pos = 0;
      const long v = std::stol(*s, &pos);
      if (pos != s->size()) throw std::invalid_argument("trailing");
      out = static_cast<int>(v);
    } catch (const std::exception&) {
      throw ConfigError(key, "expected an integer, got '" + *s + "'");
    }
  }

  void text(const std::string& key, std::string& out) {
    auto s = raw(key);
    if (s) out = *s;
  }

  /// Rejects any key not queried so far.
  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty())
        throw ConfigError(section, "entry outside any section");
      for (const auto& [key, value] : body) {
        const std::string full = section + "." + key;
        if (!seen_.count(full)) throw ConfigError(full, "unknown key");
      }
    }
  }

 private:
  static double parse_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a number, got '" + s + "'");
    }
  }

  const boost::property_tree::ptree& tree_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("<file>", std::string("malformed INI: ") + e.message() + " at line " +
                                    std::to_string(e.line()));
  }
  detail::IniReader r(tree);
  RunConfig c;
  auto& m = c.model;
  for (auto [k, v] : std::initializer_list<std::pair<const char*, double*>>{
           {"eta", &m.eta}, {"D", &m.D}, {"M", &m.M}, {"ell", &m.ell}, {"gamma_h", &m.gamma_h},
           {"gamma_c", &m.gamma_c}, {"S_h", &m.S_h}, {"S_c", &m.S_c}, {"gamma_p", &m.gamma_p},
           {"alpha_h", &m.alpha_h}, {"alpha_c", &m.alpha_c}, {"m_ref", &m.m_ref}, {"rho", &m.rho},
           {"A", &m.A}, {"sigma_l", &m.sigma_l}, {"sigma_r", &m.sigma_r}})
    r.number(std::string("model.") + k, *v, true);
  r.number("model.c0_sigma", m.c0_sigma);
  r.number("model.c1_sigma", m.c1_sigma);
  r.number("model.c0_p", m.c0_p);
  r.number("model.c1_p", m.c1_p);
  std::string tilt = "pi";
  r.text("model.tilt_form", tilt);
  if (tilt == "pi") m.tilt_form = TiltForm::kOverPi;
  else if (tilt == "two") m.tilt_form = TiltForm::kOverTwo;
  else throw ConfigError("model.tilt_form", "expected 'pi' or 'two', got '" + tilt + "'");

  r.integer("mesh.working_elements", c.truth.working_elements);
  r.integer("mesh.fine_elements", c.truth.fine_elements);
  r.number("mesh.domain_side", c.truth.domain_side);

  r.number("truth.xc", c.truth.ellipse.xc);
  r.number("truth.yc", c.truth.ellipse.yc);
  r.number("truth.a", c.truth.ellipse.a);
  r.number("truth.b", c.truth.ellipse.b);
  r.number("truth.steepness", c.truth.ellipse.steepness);

  r.number("time.dt", c.solver.time.dt);
  r.number("time.t_end", c.solver.time.t_end, true);
  r.number("time.rho_inf", c.solver.time.rho_inf);

  r.number("newton.tol", c.solver.newton.tol);
  r.integer("newton.max_iters", c.solver.newton.max_iters);
  r.number("newton.abs_tol", c.solver.newton.abs_tol);
  r.number("newton.block_floor", c.solver.newton.block_floor);

  r.number("gmres.tol", c.solver.gmres.tol);
  r.integer("gmres.max_iters", c.solver.gmres.max_iters);
  r.integer("gmres.restart", c.solver.gmres.restart);
  std::string precond = "diagonal";
  r.text("gmres.preconditioner", precond);
  if (precond == "diagonal") c.solver.gmres.diagonal_preconditioner = true;
  else if (precond == "none") c.solver.gmres.diagonal_preconditioner = false;
  else throw ConfigError("gmres.preconditioner", "expected 'diagonal' or 'none', got '" + precond + "'");

  std::string method = "LandweberSD";
  r.text("recon.method", method);
  if (method == "LandweberSD") c.recon.method = ReconMethod::LandweberSD;
  else if (method == "AdaptiveGD") c.recon.method = ReconMethod::AdaptiveGD;
  else throw ConfigError("recon.method", "expected 'LandweberSD' or 'AdaptiveGD', got '" + method + "'");
  r.number("recon.eps", c.recon.eps);
  r.integer("recon.max_iters", c.recon.max_iters);
  r.number("recon.fixed_step", c.recon.fixed_step);
  r.number("recon.guess_a", c.guess_a);
  r.number("recon.guess_b", c.guess_b);
  r.text("recon.measurement", c.measurement);
  if (auto k = r.raw("recon.kappa")) {
    std::stringstream ss(*k);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
      if (i == 3) throw ConfigError("recon.kappa", "expected three comma-separated numbers");
      try {
        std::size_t pos = 0;
        c.recon.kappa[i] = std::stod(item, &pos);
        if (item.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("x");
      } catch (const std::exception&) {
        throw ConfigError("recon.kappa", "expected three comma-separated numbers, got '" + *k + "'");
      }
      ++i;
    }
    if (i != 3) throw ConfigError("recon.kappa", "expected three comma-separated numbers");
  }

  r.number("noise.level", c.noise.level);
  std::string mode = "multiplicative";
  r.text("noise.mode", mode);
  if (mode == "multiplicative") c.noise.mode = NoiseMode::Multiplicative;
  else if (mode == "additive") c.noise.mode = NoiseMode::Additive;
  else throw ConfigError("noise.mode", "expected 'multiplicative' or 'additive', got '" + mode + "'");

  r.integer("metrics.cells_per_side", c.metrics.cells_per_side);
  r.integer("metrics.points_per_cell", c.metrics.points_per_cell);
  std::string region = "union";
  r.text("metrics.ccc_region", region);
  if (region == "union") c.metrics.ccc_region = CccRegion::Union;
  else if (region == "intersection") c.metrics.ccc_region = CccRegion::Intersection;
  else throw ConfigError("metrics.ccc_region", "expected 'union' or 'intersection', got '" + region + "'");

  r.text("output.dir", c.output.dir);
  r.number("output.dump_stride", c.output.dump_stride);
  int seed = 0;
  r.integer("run.seed", seed);
  if (seed < 0) throw ConfigError("run.seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  r.reject_unknown();
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config file " + path.string());
  return parse_config(in);
}

/// Canonical text of every resolved setting, used for the config hash.
inline std::string canonical(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  const auto& m = c.model;
  os << "model:" << format_double(m.eta) << ',' << format_double(m.D) << ',' << format_double(m.M) << ','
     << format_double(m.ell) << ',' << format_double(m.gamma_h) << ',' << format_double(m.gamma_c) << ','
     << format_double(m.S_h) << ',' << format_double(m.S_c) << ',' << format_double(m.gamma_p) << ','
     << format_double(m.alpha_h) << ',' << format_double(m.alpha_c) << ',' << format_double(m.m_ref) << ','
     << format_double(m.rho) << ',' << format_double(m.A) << ',' << format_double(m.sigma_l) << ','
     << format_double(m.sigma_r) << ',' << (m.tilt_form == TiltForm::kOverPi ? "pi" : "two") << ','
     << format_double(m.c0_sigma.value_or(NAN)) << ',' << format_double(m.c1_sigma.value_or(NAN)) << ','
     << format_double(m.c0_p.value_or(NAN)) << ',' << format_double(m.c1_p.value_or(NAN)) << '\n';
  const auto& t = c.truth;
  os << "mesh:" << t.working_elements << ',' << t.fine_elements << ',' << format_double(t.domain_side) << '\n';
  os << "truth:" << format_double(t.ellipse.xc) << ',' << format_double(t.ellipse.yc) << ','
     << format_double(t.ellipse.a) << ',' << format_double(t.ellipse.b) << ','
     << format_double(t.ellipse.steepness) << '\n';
  const auto& s = c.solver;
  os << "time:" << format_double(s.time.dt) << ',' << format_double(s.time.t_end) << ','
     << format_double(s.time.rho_inf) << '\n';
  os << "newton:" << format_double(s.newton.tol) << ',' << s.newton.max_iters << ','
     << format_double(s.newton.abs_tol) << ',' << format_double(s.newton.block_floor) << '\n';
  os << "gmres:" << format_double(s.gmres.tol) << ',' << s.gmres.max_iters << ',' << s.gmres.restart << ','
     << s.gmres.diagonal_preconditioner << '\n';
  os << "recon:" << to_string(c.recon.method) << ',' << format_double(c.recon.eps) << ',' << c.recon.max_iters
     << ',' << format_double(c.recon.kappa[0]) << ',' << format_double(c.recon.kappa[1]) << ','
     << format_double(c.recon.kappa[2]) << ',' << format_double(c.recon.fixed_step) << ','
     << format_double(c.guess_a) << ',' << format_double(c.guess_b) << ',' << c.measurement << '\n';
  os << "noise:" << format_double(c.noise.level) << ','
     << (c.noise.mode == NoiseMode::Multiplicative ? "multiplicative" : "additive") << '\n';
  os << "metrics:" << c.metrics.cells_per_side << ',' << c.metrics.points_per_cell << ','
     << (c.metrics.ccc_region == CccRegion::Union ? "union" : "intersection") << '\n';
  os << "seed:" << c.seed << '\n';
  return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical(c))));
  return buf;
}

}  // namespace pfrecon
