#pragma once

// Tensor-product C^1 quadratic B-spline spaces on the square [0, L]^2.
//
// Basis functions are indexed lexicographically, A = iy * n + ix with
// n = elements_per_side + 2 functions per direction. Open uniform knot
// vectors make the boundary functions interpolatory at the patch edges, so
// the zero-trace subspace is obtained by fixing every function whose index
// touches ix in {0, n-1} or iy in {0, n-1}.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/linalg.hpp"

namespace pfrecon {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Gauss-Legendre nodes and weights mapped to [0, 1] (weights sum to 1).
struct QuadratureRule {
  int points_per_direction = 3;
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit QuadratureRule(int n = 3) : points_per_direction(n) {
    if (n < 1 || n > 20) throw UsageError("QuadratureRule: 1..20 points supported");
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
      // Newton iteration on P_n starting from the Chebyshev guess
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 1.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        const double pn = (n == 1) ? x : p1;
        const double pnm1 = (n == 1) ? 1.0 : p0;
        dp = n * (x * pn - pnm1) / (x * x - 1.0);
        const double dx = pn / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      if (n == 1) {
        x = 0.0;
        dp = 1.0;
      }
      nodes[n - 1 - i] = 0.5 * (x + 1.0);
      weights[n - 1 - i] = (n == 1) ? 1.0 : 1.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

/// Values and first derivatives of the three quadratic B-splines that are
/// nonzero on one element, in physical units.
struct LocalBasis1D {
  std::array<double, 3> value{};
  std::array<double, 3> deriv{};
};

class SplineSpace {
 public:
  static constexpr int degree = 2;

  SplineSpace(int elements_per_side, double domain_side, int quad_points = 3)
      : elements_(elements_per_side), side_(domain_side), rule_(quad_points) {
    if (elements_ < 2) throw UsageError("SplineSpace: elements_per_side must be >= 2");
    if (!(side_ > 0.0)) throw UsageError("SplineSpace: domain_side must be > 0");
    h_ = side_ / elements_;
    n1_ = elements_ + degree;
    knots_.reserve(static_cast<std::size_t>(elements_) + 2 * degree + 1);
    for (int i = 0; i < degree; ++i) knots_.push_back(0.0);
    for (int i = 0; i <= elements_; ++i) knots_.push_back(static_cast<double>(i));
    for (int i = 0; i < degree; ++i) knots_.push_back(static_cast<double>(elements_));

    mask_.assign(size(), false);
    for (int iy = 0; iy < n1_; ++iy)
      for (int ix = 0; ix < n1_; ++ix)
        if (ix == 0 || iy == 0 || ix == n1_ - 1 || iy == n1_ - 1) mask_[index(ix, iy)] = true;

    const int nq = rule_.points_per_direction;
    qp_.resize(static_cast<std::size_t>(elements_) * nq);
    for (int e = 0; e < elements_; ++e)
      for (int q = 0; q < nq; ++q) qp_[static_cast<std::size_t>(e) * nq + q] = basis_1d(e, rule_.nodes[q]);

    build_pattern();
    assemble_mass_and_stiffness();
  }

  int elements_per_side() const noexcept { return elements_; }
  double domain_side() const noexcept { return side_; }
  double element_size() const noexcept { return h_; }
  int functions_per_side() const noexcept { return n1_; }
  /// n_f, the number of basis functions per scalar field.
  std::size_t size() const noexcept { return static_cast<std::size_t>(n1_) * n1_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const QuadratureRule& quadrature() const noexcept { return rule_; }
  /// True for functions constrained to zero in the zero-trace space.
  const std::vector<bool>& dirichlet_mask() const noexcept { return mask_; }

  std::size_t index(int ix, int iy) const noexcept {
    return static_cast<std::size_t>(iy) * n1_ + static_cast<std::size_t>(ix);
  }

  bool same_as(const SplineSpace& o) const noexcept {
    return this == &o || (elements_ == o.elements_ && side_ == o.side_ &&
                          rule_.points_per_direction == o.rule_.points_per_direction);
  }

  /// Local basis on element e at reference coordinate xi in [0, 1].
  LocalBasis1D basis_1d(int e, double xi) const {
    const double u = e + xi;
    const std::size_t k = static_cast<std::size_t>(e) + degree;  // knot span
    const auto& U = knots_;
    // degree-1 functions N_{k-1,1}, N_{k,1} on the span
    const double n10 = (U[k + 1] - u) / (U[k + 1] - U[k]);
    const double n11 = (u - U[k]) / (U[k + 1] - U[k]);
    LocalBasis1D b;
    const double l1 = U[k + 1] - U[k - 1];
    const double l2 = U[k + 2] - U[k];
    b.value[0] = (U[k + 1] - u) / l1 * n10;
    b.value[1] = (u - U[k - 1]) / l1 * n10 + (U[k + 2] - u) / l2 * n11;
    b.value[2] = (u - U[k]) / l2 * n11;
    b.deriv[0] = -2.0 / l1 * n10 / h_;
    b.deriv[1] = (2.0 / l1 * n10 - 2.0 / l2 * n11) / h_;
    b.deriv[2] = 2.0 / l2 * n11 / h_;
    return b;
  }

  /// Element index and reference coordinate for a physical coordinate.
  std::pair<int, double> locate(double x) const {
    if (!(x >= 0.0 && x <= side_)) throw DomainError("point outside [0, L_d]: " + std::to_string(x));
    int e = static_cast<int>(std::floor(x / h_));
    if (e >= elements_) e = elements_ - 1;
    return {e, x / h_ - e};
  }

  /// Precomputed 1D basis at quadrature node q of element e.
  const LocalBasis1D& qp_basis(int e, int q) const noexcept {
    return qp_[static_cast<std::size_t>(e) * rule_.points_per_direction + q];
  }
  /// Physical 1D quadrature weight (reference weight times h).
  double qp_weight(int q) const noexcept { return rule_.weights[q] * h_; }
  double qp_coord(int e, int q) const noexcept { return (e + rule_.nodes[q]) * h_; }

  /// Global index of local function (a, b), a, b in {0,1,2}, on element (ex, ey).
  std::size_t global(int ex, int ey, int a, int b) const noexcept { return index(ex + a, ey + b); }

  // Scalar 25-point stencil pattern shared by every matrix on this space.
  const std::vector<std::size_t>& pattern_row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& pattern_cols() const noexcept { return cols_; }
  /// Position in the scalar pattern of the (local i, local j) pair of element
  /// e = ey * E + ex; local index l = b * 3 + a.
  const std::array<std::size_t, 81>& element_map(std::size_t e) const noexcept { return emap_[e]; }

  const SparseMatrix& mass() const noexcept { return mass_; }
  const SparseMatrix& stiffness() const noexcept { return stiff_; }

 private:
  void build_pattern() {
    const std::size_t nf = size();
    row_ptr_.assign(nf + 1, 0);
    cols_.clear();
    for (int iy = 0; iy < n1_; ++iy)
      for (int ix = 0; ix < n1_; ++ix) {
        for (int jy = std::max(0, iy - 2); jy <= std::min(n1_ - 1, iy + 2); ++jy)
          for (int jx = std::max(0, ix - 2); jx <= std::min(n1_ - 1, ix + 2); ++jx)
            cols_.push_back(index(jx, jy));
        row_ptr_[index(ix, iy) + 1] = cols_.size();
      }
    auto pos = [&](int ix, int iy, int jx, int jy) {
      const int x0 = std::max(0, ix - 2), x1 = std::min(n1_ - 1, ix + 2);
      const int y0 = std::max(0, iy - 2);
      return row_ptr_[index(ix, iy)] + static_cast<std::size_t>((jy - y0) * (x1 - x0 + 1) + (jx - x0));
    };
    emap_.resize(static_cast<std::size_t>(elements_) * elements_);
    for (int ey = 0; ey < elements_; ++ey)
      for (int ex = 0; ex < elements_; ++ex) {
        auto& m = emap_[static_cast<std::size_t>(ey) * elements_ + ex];
        for (int bi = 0; bi < 3; ++bi)
          for (int ai = 0; ai < 3; ++ai)
            for (int bj = 0; bj < 3; ++bj)
              for (int aj = 0; aj < 3; ++aj)
                m[static_cast<std::size_t>((bi * 3 + ai) * 9 + bj * 3 + aj)] =
                    pos(ex + ai, ey + bi, ex + aj, ey + bj);
      }
  }

  void assemble_mass_and_stiffness() {
    mass_ = SparseMatrix(size(), row_ptr_, cols_);
    stiff_ = SparseMatrix(size(), row_ptr_, cols_);
    auto& mv = mass_.values();
    auto& kv = stiff_.values();
    const int nq = rule_.points_per_direction;
    for (int ey = 0; ey < elements_; ++ey)
      for (int ex = 0; ex < elements_; ++ex) {
        const auto& m = emap_[static_cast<std::size_t>(ey) * elements_ + ex];
        for (int qy = 0; qy < nq; ++qy)
          for (int qx = 0; qx < nq; ++qx) {
            const auto& bx = qp_basis(ex, qx);
            const auto& by = qp_basis(ey, qy);
            const double w = qp_weight(qx) * qp_weight(qy);
            std::array<double, 9> N{}, Nx{}, Ny{};
            for (int b = 0; b < 3; ++b)
              for (int a = 0; a < 3; ++a) {
                N[b * 3 + a] = bx.value[a] * by.value[b];
                Nx[b * 3 + a] = bx.deriv[a] * by.value[b];
                Ny[b * 3 + a] = bx.value[a] * by.deriv[b];
              }
            for (int i = 0; i < 9; ++i)
              for (int j = 0; j < 9; ++j) {
                mv[m[i * 9 + j]] += w * N[i] * N[j];
                kv[m[i * 9 + j]] += w * (Nx[i] * Nx[j] + Ny[i] * Ny[j]);
              }
          }
      }
  }

  int elements_;
  double side_;
  QuadratureRule rule_;
  double h_ = 0.0;
  int n1_ = 0;
  std::vector<double> knots_;
  std::vector<bool> mask_;
  std::vector<LocalBasis1D> qp_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<std::array<std::size_t, 81>> emap_;
  SparseMatrix mass_;
  SparseMatrix stiff_;
};

using SpacePtr = std::shared_ptr<const SplineSpace>;

inline SpacePtr make_space(int elements_per_side, double domain_side, int quad_points = 3) {
  return std::make_shared<const SplineSpace>(elements_per_side, domain_side, quad_points);
}

/// Coefficient vector (control variables) of one scalar field.
class Field {
 public:
  Field() = default;
  explicit Field(SpacePtr space) : space_(std::move(space)), coeffs_(space_->size(), 0.0) {}
  Field(SpacePtr space, Vector coeffs) : space_(std::move(space)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() != space_->size())
      throw UsageError("Field: coefficient count " + std::to_string(coeffs_.size()) +
                       " does not match n_f = " + std::to_string(space_->size()));
  }

  static Field constant(SpacePtr space, double value) {
    const auto n = space->size();
    return Field(std::move(space), Vector(n, value));
  }

  const SplineSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  Vector& coefficients() noexcept { return coeffs_; }
  const Vector& coefficients() const noexcept { return coeffs_; }
  std::size_t size() const noexcept { return coeffs_.size(); }
  double operator[](std::size_t i) const noexcept { return coeffs_[i]; }
  double& operator[](std::size_t i) noexcept { return coeffs_[i]; }

  /// True if every Dirichlet-constrained coefficient is exactly zero.
  bool has_zero_trace() const {
    const auto& m = space_->dirichlet_mask();
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
      if (m[i] && coeffs_[i] != 0.0) return false;
    return true;
  }

 private:
  SpacePtr space_;
  Vector coeffs_;
};

/// Value of the spline expansion with coefficients c at x.
inline double evaluate(const SplineSpace& s, std::span<const double> c, Point p) {
  const auto [ex, xi] = s.locate(p.x);
  const auto [ey, eta] = s.locate(p.y);
  const auto bx = s.basis_1d(ex, xi);
  const auto by = s.basis_1d(ey, eta);
  double v = 0.0;
  for (int b = 0; b < 3; ++b)
    for (int a = 0; a < 3; ++a) v += c[s.global(ex, ey, a, b)] * bx.value[a] * by.value[b];
  return v;
}

inline double evaluate(const Field& f, Point p) { return evaluate(f.space(), f.coefficients(), p); }

inline std::array<double, 2> evaluate_gradient(const Field& f, Point p) {
  const auto& s = f.space();
  const auto [ex, xi] = s.locate(p.x);
  const auto [ey, eta] = s.locate(p.y);
  const auto bx = s.basis_1d(ex, xi);
  const auto by = s.basis_1d(ey, eta);
  std::array<double, 2> g{0.0, 0.0};
  for (int b = 0; b < 3; ++b)
    for (int a = 0; a < 3; ++a) {
      const double c = f[s.global(ex, ey, a, b)];
      g[0] += c * bx.deriv[a] * by.value[b];
      g[1] += c * bx.value[a] * by.deriv[b];
    }
  return g;
}

inline void require_same_space(const SplineSpace& a, const SplineSpace& b, const char* what) {
  if (!a.same_as(b)) throw UsageError(std::string(what) + ": fields live in different spaces");
}

/// L^2(Omega) inner product of two coefficient vectors through the mass matrix.
inline double l2_inner_product(const SplineSpace& s, std::span<const double> u,
                               std::span<const double> v) {
  const auto& M = s.mass();
  const auto& rp = M.row_ptr();
  const auto& cols = M.cols();
  const auto& vals = M.values();
  double sum = 0.0;
  for (std::size_t r = 0; r < s.size(); ++r) {
    double t = 0.0;
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) t += vals[k] * v[cols[k]];
    sum += u[r] * t;
  }
  return sum;
}

inline double l2_inner_product(const Field& u, const Field& v) {
  require_same_space(u.space(), v.space(), "l2_inner_product");
  return l2_inner_product(u.space(), u.coefficients(), v.coefficients());
}

inline double l2_norm(const SplineSpace& s, std::span<const double> u) {
  return std::sqrt(std::max(0.0, l2_inner_product(s, u, u)));
}

inline double l2_norm(const Field& u) { return l2_norm(u.space(), u.coefficients()); }

/// Solves M c = rhs, restricted to the free functions when zero_trace is set.
inline Vector solve_mass(const SplineSpace& s, std::span<const double> rhs, bool zero_trace) {
  static const std::vector<bool> none;
  return conjugate_gradient(s.mass(), rhs, 1e-13, 10000, zero_trace ? s.dirichlet_mask() : none);
}

using ScalarFunction = std::function<double(double, double)>;

/// L^2 projection of an analytic function, optionally into the zero-trace space.
/// Integrals use the space's quadrature refined `subdivisions` times per element.
inline Field l2_project(const ScalarFunction& f, SpacePtr space, bool zero_trace,
                        int subdivisions = 1) {
  const auto& s = *space;
  const int E = s.elements_per_side();
  const int nq = s.quadrature().points_per_direction;
  const auto& rule = s.quadrature();
  const int r = std::max(1, subdivisions);
  Vector rhs(s.size(), 0.0);
  for (int ey = 0; ey < E; ++ey)
    for (int ex = 0; ex < E; ++ex)
      for (int sy = 0; sy < r; ++sy)
        for (int sx = 0; sx < r; ++sx)
          for (int qy = 0; qy < nq; ++qy)
            for (int qx = 0; qx < nq; ++qx) {
              const double xi = (sx + rule.nodes[qx]) / r;
              const double eta = (sy + rule.nodes[qy]) / r;
              const auto bx = (r == 1) ? s.qp_basis(ex, qx) : s.basis_1d(ex, xi);
              const auto by = (r == 1) ? s.qp_basis(ey, qy) : s.basis_1d(ey, eta);
              const double w = s.qp_weight(qx) * s.qp_weight(qy) / (r * r);
              const double fv = f((ex + xi) * s.element_size(), (ey + eta) * s.element_size());
              for (int b = 0; b < 3; ++b)
                for (int a = 0; a < 3; ++a)
                  rhs[s.global(ex, ey, a, b)] += w * fv * bx.value[a] * by.value[b];
            }
  return Field(std::move(space), solve_mass(s, rhs, zero_trace));
}

/// L^2 projection of a spline field onto another space over the same domain.
/// Quadrature follows the finer of the two meshes, so the transfer is exact
/// for nested meshes.
inline Field l2_transfer(const Field& src, SpacePtr dst, bool zero_trace) {
  if (src.space().domain_side() != dst->domain_side())
    throw UsageError("l2_transfer: spaces cover different domains");
  const int es = src.space().elements_per_side();
  const int ed = dst->elements_per_side();
  const int sub = std::max(1, (es + ed - 1) / ed);
  return l2_project([&](double x, double y) { return evaluate(src, {x, y}); }, std::move(dst),
                    zero_trace, sub);
}

/// Integral of a field over the domain.
inline double integrate(const Field& f) {
  const auto& s = f.space();
  const Vector one(s.size(), 1.0);
  return l2_inner_product(s, f.coefficients(), one);
}

}  // namespace pfrecon
