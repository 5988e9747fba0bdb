#pragma once

// Sparse matrix kernel and Krylov solvers used by every implicit solve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pfrecon/errors.hpp"

namespace pfrecon {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Square matrix in compressed sparse row storage. Column indices within a row
/// are sorted and unique.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> cols)
      : n_(n), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)), vals_(cols_.size(), 0.0) {
    if (row_ptr_.size() != n_ + 1 || row_ptr_.back() != cols_.size())
      throw UsageError("SparseMatrix: inconsistent CSR arrays");
  }

  /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
  static SparseMatrix from_triplets(std::size_t n,
                                    std::vector<std::tuple<std::size_t, std::size_t, double>> t) {
    std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    std::vector<std::size_t> row_ptr(n + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    for (std::size_t k = 0; k < t.size(); ++k) {
      auto [r, c, v] = t[k];
      if (r >= n || c >= n) throw UsageError("SparseMatrix: triplet index out of range");
      if (!cols.empty() && k > 0 && std::get<0>(t[k - 1]) == r && std::get<1>(t[k - 1]) == c) {
        vals.back() += v;
        continue;
      }
      cols.push_back(c);
      vals.push_back(v);
      ++row_ptr[r + 1];
    }
    std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
    SparseMatrix m(n, std::move(row_ptr), std::move(cols));
    m.vals_ = std::move(vals);
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t nonzeros() const noexcept { return cols_.size(); }
  const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<std::size_t>& cols() const noexcept { return cols_; }
  std::vector<double>& values() noexcept { return vals_; }
  const std::vector<double>& values() const noexcept { return vals_; }

  void set_zero() { std::fill(vals_.begin(), vals_.end(), 0.0); }

  /// Position of entry (r, c) in the value array, or npos if not in the pattern.
  std::size_t find(std::size_t r, std::size_t c) const {
    auto first = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    auto last = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) return npos;
    return static_cast<std::size_t>(it - cols_.begin());
  }

  double coeff(std::size_t r, std::size_t c) const {
    const auto k = find(r, c);
    return k == npos ? 0.0 : vals_[k];
  }

  /// Replaces row r by the identity row.
  void set_identity_row(std::size_t r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) vals_[k] = (cols_[k] == r) ? 1.0 : 0.0;
  }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t r = 0; r < n_; ++r) {
      double s = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += vals_[k] * x[cols_[k]];
      y[r] = s;
    }
  }

  Vector multiply(std::span<const double> x) const {
    Vector y(n_);
    multiply(x, y);
    return y;
  }

  Vector diagonal() const {
    Vector d(n_, 0.0);
    for (std::size_t r = 0; r < n_; ++r) d[r] = coeff(r, r);
    return d;
  }

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

struct GmresConfig {
  double tol = 1e-3;  // relative residual
  int max_iters = 500;
  int restart = 0;  // 0 means no restart (restart == max_iters)
  bool diagonal_preconditioner = true;

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("gmres.tol", "must be > 0");
    if (max_iters < 1) throw ConfigError("gmres.max_iters", "must be >= 1");
    if (restart < 0) throw ConfigError("gmres.restart", "must be >= 0");
  }
};

struct GmresResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  /// ||D^{-1}(b - A x)|| / ||D^{-1} b||, the quantity the stopping test uses.
  double preconditioned_residual = 0.0;
  /// ||b - A x|| / ||b||.
  double true_residual = 0.0;
  /// Preconditioned relative residual after each inner iteration.
  std::vector<double> history;
};

/// GMRES with left diagonal (Jacobi) preconditioning. The stopping test is on
/// the preconditioned residual; the true residual is reported alongside.
/// Returns the best iterate with converged == false after max_iters.
inline GmresResult gmres_solve(const SparseMatrix& A, std::span<const double> b,
                               const GmresConfig& cfg, std::span<const double> x0 = {}) {
  cfg.validate();
  const std::size_t n = A.size();
  if (b.size() != n) throw UsageError("gmres_solve: right-hand side size mismatch");
  for (double v : b)
    if (std::isnan(v)) throw UsageError("gmres_solve: NaN in right-hand side");

  Vector inv_diag(n, 1.0);
  if (cfg.diagonal_preconditioner) {
    const Vector d = A.diagonal();
    for (std::size_t i = 0; i < n; ++i) {
      if (d[i] == 0.0)
        throw SolverError("gmres_solve: zero diagonal entry in row " + std::to_string(i) +
                          " (diagonal preconditioner undefined)");
      inv_diag[i] = 1.0 / d[i];
    }
  }

  GmresResult res;
  res.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), res.x.begin());

  Vector pb(n);
  for (std::size_t i = 0; i < n; ++i) pb[i] = inv_diag[i] * b[i];
  const double pb_norm = norm2(pb);
  const double b_norm = norm2(b);

  auto finish = [&](bool converged) {
    res.converged = converged;
    Vector r = A.multiply(res.x);
    Vector pr(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = b[i] - r[i];
      pr[i] = inv_diag[i] * r[i];
    }
    res.true_residual = b_norm > 0.0 ? norm2(r) / b_norm : norm2(r);
    res.preconditioned_residual = pb_norm > 0.0 ? norm2(pr) / pb_norm : norm2(pr);
    return res;
  };

  if (pb_norm == 0.0) {
    std::fill(res.x.begin(), res.x.end(), 0.0);
    return finish(true);
  }

  const int m = (cfg.restart == 0) ? cfg.max_iters : std::min(cfg.restart, cfg.max_iters);
  // Krylov basis and Hessenberg columns grow on demand; most solves need few vectors.
  std::vector<Vector> V;
  std::vector<Vector> H;  // H[k] is column k, length k + 2
  Vector cs, sn, g, y, w(n);

  int total = 0;
  while (total < cfg.max_iters) {
    if (V.empty()) V.emplace_back(n);
    A.multiply(res.x, w);
    for (std::size_t i = 0; i < n; ++i) V[0][i] = inv_diag[i] * (b[i] - w[i]);
    const double beta = norm2(V[0]);
    if (beta / pb_norm <= cfg.tol) return finish(true);
    for (double& v : V[0]) v /= beta;
    g.assign(1, beta);
    cs.clear();
    sn.clear();

    int k = 0;
    bool done = false;
    bool converged = false;
    for (; k < m && total < cfg.max_iters; ++k, ++total) {
      if (static_cast<int>(H.size()) <= k) H.emplace_back(static_cast<std::size_t>(k) + 2);
      Vector& h = H[k];
      std::fill(h.begin(), h.end(), 0.0);
      A.multiply(V[k], w);
      for (std::size_t i = 0; i < n; ++i) w[i] *= inv_diag[i];
      // modified Gram-Schmidt
      for (int j = 0; j <= k; ++j) {
        h[j] = dot(w, V[j]);
        axpy(-h[j], V[j], w);
      }
      h[k + 1] = norm2(w);
      const bool breakdown = h[k + 1] <= 1e-14 * beta;
      if (static_cast<int>(V.size()) <= k + 1) V.emplace_back(n);
      if (!breakdown)
        for (std::size_t i = 0; i < n; ++i) V[k + 1][i] = w[i] / h[k + 1];
      for (int j = 0; j < k; ++j) {
        const double t = cs[j] * h[j] + sn[j] * h[j + 1];
        h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
        h[j] = t;
      }
      const double denom = std::hypot(h[k], h[k + 1]);
      cs.push_back(h[k] / denom);
      sn.push_back(h[k + 1] / denom);
      h[k] = denom;
      h[k + 1] = 0.0;
      g.push_back(-sn[k] * g[k]);
      g[k] = cs[k] * g[k];
      const double rel = std::abs(g[k + 1]) / pb_norm;
      res.history.push_back(rel);
      res.iterations = total + 1;
      if (rel <= cfg.tol || breakdown) {
        ++k;
        ++total;
        done = true;
        converged = rel <= cfg.tol;
        break;
      }
    }
    // back substitution on the k x k upper triangle
    y.assign(static_cast<std::size_t>(k), 0.0);
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int j = i + 1; j < k; ++j) s -= H[j][i] * y[j];
      y[i] = s / H[i][i];
    }
    for (int j = 0; j < k; ++j) axpy(y[j], V[j], res.x);
    if (done) return finish(converged);
  }
  return finish(false);
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite
/// systems. Rows with fixed[i] == true are held at zero (the operator is
/// restricted to the free set). Throws if the tolerance is not met.
inline Vector conjugate_gradient(const SparseMatrix& A, std::span<const double> b, double tol,
                                 int max_iters, const std::vector<bool>& fixed = {}) {
  const std::size_t n = A.size();
  auto is_free = [&](std::size_t i) { return fixed.empty() || !fixed[i]; };
  Vector x(n, 0.0), r(n), z(n), p(n), Ap(n);
  const Vector d = A.diagonal();
  for (std::size_t i = 0; i < n; ++i) {
    if (is_free(i) && !(d[i] > 0.0)) throw SolverError("conjugate_gradient: non-positive diagonal");
    r[i] = is_free(i) ? b[i] : 0.0;
  }
  const double b_norm = norm2(r);
  if (b_norm == 0.0) return x;
  for (std::size_t i = 0; i < n; ++i) z[i] = is_free(i) ? r[i] / d[i] : 0.0;
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < max_iters; ++it) {
    A.multiply(p, Ap);
    for (std::size_t i = 0; i < n; ++i)
      if (!is_free(i)) Ap[i] = 0.0;
    const double alpha = rz / dot(p, Ap);
    axpy(alpha, p, x);
    axpy(-alpha, Ap, r);
    if (norm2(r) <= tol * b_norm) return x;
    for (std::size_t i = 0; i < n; ++i) z[i] = is_free(i) ? r[i] / d[i] : 0.0;
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("conjugate_gradient: no convergence in " + std::to_string(max_iters) +
                    " iterations");
}

}  // namespace pfrecon
