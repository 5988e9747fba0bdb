#pragma once

// Tumour assessment metrics: relative volume error, Dice coefficient,
// relative L2 error and concordance correlation coefficient.
//
// Region integrals use indicator functions sampled on a uniform grid of
// cells with Gauss points in each cell. With the default resolution (four
// cells per element of the finer mesh) every cell sits inside one element of
// both meshes, so smooth integrands such as the L2 error are exact.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/spline.hpp"

namespace pfrecon {

enum class CccRegion { Union, Intersection };

struct MetricsOptions {
  /// Sampling cells per side; 0 picks 4 * max(elements_per_side).
  int cells_per_side = 0;
  int points_per_cell = 3;
  double threshold = 0.5;
  CccRegion ccc_region = CccRegion::Union;
};

struct MetricsReport {
  double e_V = 0.0;
  double dsc = 1.0;
  double e_L2 = 0.0;
  double ccc = 1.0;
  double V_ref = 0.0;
  double V_rec = 0.0;
};

/// Tensor sampling grid on [0, L]^2. Points are stored per direction with
/// their weights; a field sampled on it is a row-major n x n array.
class SamplingGrid {
 public:
  SamplingGrid(double side, int cells, int points_per_cell) : side_(side) {
    if (cells < 1) throw UsageError("SamplingGrid: cells_per_side must be >= 1");
    QuadratureRule q(points_per_cell);
    const double h = side / cells;
    for (int c = 0; c < cells; ++c)
      for (int i = 0; i < points_per_cell; ++i) {
        coords_.push_back((c + q.nodes[i]) * h);
        weights_.push_back(q.weights[i] * h);
      }
  }

  double side() const noexcept { return side_; }
  std::size_t points_per_side() const noexcept { return coords_.size(); }
  const std::vector<double>& coords() const noexcept { return coords_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(std::size_t ix, std::size_t iy) const noexcept { return weights_[ix] * weights_[iy]; }

  /// Values of a spline field at every sample point.
  std::vector<double> sample(const SplineSpace& s, std::span<const double> c) const {
    if (s.domain_side() != side_) throw UsageError("SamplingGrid: field covers a different domain");
    const std::size_t n = coords_.size();
    std::vector<int> elem(n);
    std::vector<LocalBasis1D> basis(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [e, xi] = s.locate(coords_[i]);
      elem[i] = e;
      basis[i] = s.basis_1d(e, xi);
    }
    std::vector<double> out(n * n);
    for (std::size_t iy = 0; iy < n; ++iy) {
      const auto& by = basis[iy];
      for (std::size_t ix = 0; ix < n; ++ix) {
        const auto& bx = basis[ix];
        double v = 0.0;
        for (int b = 0; b < 3; ++b) {
          double row = 0.0;
          for (int a = 0; a < 3; ++a) row += c[s.global(elem[ix], elem[iy], a, b)] * bx.value[a];
          v += row * by.value[b];
        }
        out[iy * n + ix] = v;
      }
    }
    return out;
  }

  std::vector<double> sample(const Field& f) const { return sample(f.space(), f.coefficients()); }

 private:
  double side_;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

inline int default_cells(const MetricsOptions& o, int e1, int e2) {
  return o.cells_per_side > 0 ? o.cells_per_side : 4 * std::max(e1, e2);
}

/// Area of {phi > threshold}.
inline double tumour_volume(const Field& phi, const MetricsOptions& o = {}) {
  const int cells = default_cells(o, phi.space().elements_per_side(), 1);
  SamplingGrid g(phi.space().domain_side(), cells, o.points_per_cell);
  const auto v = g.sample(phi);
  const std::size_t n = g.points_per_side();
  double V = 0.0;
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix)
      if (v[iy * n + ix] > o.threshold) V += g.weight(ix, iy);
  return V;
}

/// Metrics from two sampled fields on the same grid.
inline MetricsReport metrics_from_samples(const SamplingGrid& g, const std::vector<double>& ref,
                                          const std::vector<double>& rec, const MetricsOptions& o) {
  const std::size_t n = g.points_per_side();
  double V_ref = 0, V_rec = 0, V_int = 0, l2_diff = 0, l2_ref = 0;
  // weighted moments over the CCC region
  double w_sum = 0, sa = 0, sb = 0;
  for (std::size_t iy = 0; iy < n; ++iy)
    for (std::size_t ix = 0; ix < n; ++ix) {
      const std::size_t k = iy * n + ix;
      const double w = g.weight(ix, iy);
      const bool in_a = ref[k] > o.threshold, in_b = rec[k] > o.threshold;
      if (in_a) V_ref += w;
      if (in_b) V_rec += w;
      if (in_a && in_b) V_int += w;
      const double d = ref[k] - rec[k];
      l2_diff += w * d * d;
      l2_ref += w * ref[k] * ref[k];
      const bool in_region = o.ccc_region == CccRegion::Union ? (in_a || in_b) : (in_a && in_b);
      if (in_region) {
        w_sum += w;
        sa += w * ref[k];
        sb += w * rec[k];
      }
    }
  MetricsReport r;
  r.V_ref = V_ref;
  r.V_rec = V_rec;
  if (!(V_ref > 0.0)) throw DomainError("metrics: reference tumour volume is zero, e_V undefined");
  r.e_V = (V_ref - V_rec) / V_ref;
  r.dsc = 2.0 * V_int / (V_ref + V_rec);
  r.e_L2 = l2_ref > 0.0 ? std::sqrt(l2_diff / l2_ref) : std::sqrt(l2_diff);
  if (w_sum > 0.0) {
    const double ma = sa / w_sum, mb = sb / w_sum;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t ix = 0; ix < n; ++ix) {
        const std::size_t k = iy * n + ix;
        const bool in_a = ref[k] > o.threshold, in_b = rec[k] > o.threshold;
        const bool in_region = o.ccc_region == CccRegion::Union ? (in_a || in_b) : (in_a && in_b);
        if (!in_region) continue;
        const double w = g.weight(ix, iy);
        va += w * (ref[k] - ma) * (ref[k] - ma);
        vb += w * (rec[k] - mb) * (rec[k] - mb);
        cov += w * (ref[k] - ma) * (rec[k] - mb);
      }
    va /= w_sum;
    vb /= w_sum;
    cov /= w_sum;
    const double denom = va + vb + (ma - mb) * (ma - mb);
    r.ccc = denom > 0.0 ? 2.0 * cov / denom : 1.0;
  } else {
    r.ccc = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

/// Compares reconstructions against one fixed reference field; the
/// reference is sampled once.
class MetricsEvaluator {
 public:
  MetricsEvaluator(const Field& ref, const SplineSpace& rec_space, MetricsOptions o = {})
      : opts_(o),
        grid_(ref.space().domain_side(),
              default_cells(o, ref.space().elements_per_side(), rec_space.elements_per_side()),
              o.points_per_cell),
        ref_samples_(grid_.sample(ref)) {
    if (ref.space().domain_side() != rec_space.domain_side())
      throw UsageError("MetricsEvaluator: reference and reconstruction cover different domains");
  }

  MetricsReport operator()(const Field& rec) const {
    return metrics_from_samples(grid_, ref_samples_, grid_.sample(rec), opts_);
  }

  const SamplingGrid& grid() const noexcept { return grid_; }

 private:
  MetricsOptions opts_;
  SamplingGrid grid_;
  std::vector<double> ref_samples_;
};

inline MetricsReport metrics(const Field& ref, const Field& rec, const MetricsOptions& o = {}) {
  return MetricsEvaluator(ref, rec.space(), o)(rec);
}

}  // namespace pfrecon
