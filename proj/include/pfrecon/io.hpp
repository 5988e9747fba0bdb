#pragma once

// Field files, legacy VTK dumps and the reconstruction history CSV.
//
// Field file layout:
//   PFFIELD v1 <elements_per_side> <degree> <L_d>
//   one coefficient per line, lexicographic basis order, 17 significant digits
//   # config <hash>            (optional trailing comment)

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/metrics.hpp"
#include "pfrecon/reconstruction.hpp"
#include "pfrecon/spline.hpp"

namespace pfrecon {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline void write_field(const std::filesystem::path& path, const Field& f, const std::string& hash = {}) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto& s = f.space();
  out << "PFFIELD v1 " << s.elements_per_side() << ' ' << SplineSpace::degree << ' '
      << format_number(s.domain_side()) << '\n';
  for (double c : f.coefficients()) out << format_number(c) << '\n';
  if (!hash.empty()) out << "# config " << hash << '\n';
  if (!out) throw Error("write to " + path.string() + " failed");
}

inline Field read_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open field file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  std::istringstream head(line);
  std::string magic, version;
  int E = 0, degree = 0;
  double L = 0.0;
  if (!(head >> magic >> version >> E >> degree >> L) || magic != "PFFIELD" || version != "v1")
    throw FormatError(path.string() + ": bad header '" + line + "'");
  std::string extra;
  if (head >> extra) throw FormatError(path.string() + ": trailing text in header");
  if (degree != SplineSpace::degree) throw FormatError(path.string() + ": unsupported degree " + std::to_string(degree));
  if (E < 2 || !(L > 0.0)) throw FormatError(path.string() + ": invalid mesh in header");
  auto space = make_space(E, L);
  Vector c;
  c.reserve(space->size());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(line, &pos);
      if (line.find_first_not_of(" \t", pos) != std::string::npos) throw std::invalid_argument("x");
      if (!std::isfinite(v)) throw std::invalid_argument("x");
      c.push_back(v);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": not a finite number");
    }
  }
  if (c.size() != space->size())
    throw FormatError(path.string() + ": expected " + std::to_string(space->size()) + " coefficients, found " +
                      std::to_string(c.size()));
  return Field(std::move(space), std::move(c));
}

/// Legacy ASCII structured-points dump of one or more fields on a uniform
/// (4 E + 1)^2 grid, E the largest mesh among the fields.
inline void write_vtk(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Field*>>& fields,
                      const std::string& hash = {}) {
  if (fields.empty()) throw UsageError("write_vtk: no fields");
  int E = 0;
  const double L = fields.front().second->space().domain_side();
  for (const auto& [name, f] : fields) E = std::max(E, f->space().elements_per_side());
  const int n = 4 * E + 1;
  const double h = L / (n - 1);
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "# vtk DataFile Version 3.0\n";
  out << "pfrecon config " << (hash.empty() ? "none" : hash) << '\n';
  out << "ASCII\nDATASET STRUCTURED_POINTS\n";
  out << "DIMENSIONS " << n << ' ' << n << " 1\n";
  out << "ORIGIN 0 0 0\n";
  out << "SPACING " << format_number(h) << ' ' << format_number(h) << " 1\n";
  out << "POINT_DATA " << n * n << '\n';
  for (const auto& [name, f] : fields) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) out << format_number(evaluate(*f, {std::min(i * h, L), std::min(j * h, L)})) << '\n';
  }
  if (!out) throw Error("write to " + path.string() + " failed");
}

inline constexpr const char* kHistoryHeader =
    "j,mu,theta,J,grad_norm,eV0,dsc0,eL2_0,ccc0,eVT,dscT,eL2_T,cccT";

/// Appends one row per iteration and flushes, so a crash leaves a valid file.
class HistoryWriter {
 public:
  HistoryWriter(const std::filesystem::path& path, const std::string& hash) {
    ensure_parent(path);
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "# config_hash=" << hash << '\n' << kHistoryHeader << '\n';
    out_.flush();
  }

  void append(const ReconRecord& r) {
    const double nan = std::nan("");
    auto m = [&](const std::optional<MetricsReport>& x, int k) {
      if (!x) return nan;
      return k == 0 ? x->e_V : k == 1 ? x->dsc : k == 2 ? x->e_L2 : x->ccc;
    };
    out_ << r.j << ',' << format_number(r.mu) << ',' << format_number(r.theta) << ',' << format_number(r.J) << ','
         << format_number(r.grad_norm);
    for (int k = 0; k < 4; ++k) out_ << ',' << format_number(m(r.metrics0, k));
    for (int k = 0; k < 4; ++k) out_ << ',' << format_number(m(r.metricsT, k));
    out_ << '\n';
    out_.flush();
    if (!out_) throw Error("history write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace pfrecon
