#pragma once

// Galerkin residual and tangent assembly for the forward, linearised and
// adjoint weak forms.
//
// Every system has the structure
//
//   R_f(A) = tau * (M udot_f)_A + d_f (K u_f)_A + int N_A r_f(x) dx
//
// with tau = +1 (forward, linearised) or -1 (adjoint), d = (lambda, eta, D),
// M and K the scalar mass and stiffness matrices, and r_f the pointwise
// reaction terms. For the linearised and adjoint systems the reactions are
// linear, r = C u and r = C^T u respectively, with C the Jacobian of the
// forward reactions evaluated on the background (phi, sigma). The tangent is
// dR/dU + shift * dR/dUdot.

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfrecon/errors.hpp"
#include "pfrecon/linalg.hpp"
#include "pfrecon/model.hpp"
#include "pfrecon/spline.hpp"
#include "pfrecon/state.hpp"

namespace pfrecon {

enum class SystemKind { Forward, Linearised, Adjoint };

inline const char* to_string(SystemKind k) {
  switch (k) {
    case SystemKind::Forward: return "forward";
    case SystemKind::Linearised: return "linearised";
    case SystemKind::Adjoint: return "adjoint";
  }
  return "?";
}

/// External load b(t) subtracted from the residual (R -= b). Used for
/// manufactured solutions; the span has length 3 n_f.
using LoadFunction = std::function<void(double t, std::span<double> load)>;

namespace detail {

/// Reaction Jacobian C at one point, see the header comment.
inline std::array<std::array<double, 3>, 3> reaction_jacobian(const ModelParams& p, double phi,
                                                              double sigma) {
  std::array<std::array<double, 3>, 3> C{};
  C[0][0] = d2F(p, phi) - tilt_m(p, sigma) * d2h(p, phi);
  C[0][1] = -dm(p, sigma) * dh(p, phi);
  C[1][0] = p.gamma_ch() * sigma - p.S_ch();
  C[1][1] = p.gamma_h + p.gamma_ch() * phi;
  C[2][0] = -p.alpha_ch();
  C[2][2] = p.gamma_p;
  return C;
}

}  // namespace detail

class GalerkinSystem {
 public:
  /// Linearised and adjoint systems need the forward trajectory they are
  /// linearised about; it must outlive the system.
  GalerkinSystem(SpacePtr space, ModelParams params, SystemKind kind,
                 const Trajectory* background = nullptr)
      : space_(std::move(space)), params_(std::move(params)), kind_(kind), background_(background) {
    params_.validate();
    if (kind_ != SystemKind::Forward) {
      if (background_ == nullptr || background_->empty())
        throw UsageError(std::string(to_string(kind_)) + " system requires a background trajectory");
      if (!background_->space()->same_as(*space_))
        throw UsageError("background trajectory lives in a different space");
    }
    const std::size_t nf = space_->size();
    constrained_.assign(3 * nf, false);
    for (std::size_t i = 0; i < nf; ++i) constrained_[i] = space_->dirichlet_mask()[i];
    diffusion_ = {params_.lambda(), params_.eta, params_.D};
    bg_phi_.resize(nf);
    bg_sigma_.resize(nf);
  }

  SystemKind kind() const noexcept { return kind_; }
  const SplineSpace& space() const noexcept { return *space_; }
  const SpacePtr& space_ptr() const noexcept { return space_; }
  const ModelParams& params() const noexcept { return params_; }
  const Trajectory* background() const noexcept { return background_; }
  std::size_t size() const noexcept { return 3 * space_->size(); }
  /// Coefficient of the time derivative: +1, or -1 for the adjoint.
  double time_sign() const noexcept { return kind_ == SystemKind::Adjoint ? -1.0 : 1.0; }
  /// Rows replaced by the Dirichlet constraint (boundary functions of u1).
  const std::vector<bool>& constrained() const noexcept { return constrained_; }

  void set_load(LoadFunction f) { load_ = std::move(f); }

  /// Block 3x3 matrix with the 25-point stencil in every block.
  SparseMatrix make_matrix() const {
    const auto& prow = space_->pattern_row_ptr();
    const auto& pcol = space_->pattern_cols();
    const std::size_t nf = space_->size();
    const std::size_t nnz = pcol.size();
    std::vector<std::size_t> row_ptr(3 * nf + 1, 0);
    std::vector<std::size_t> cols;
    cols.reserve(9 * nnz);
    for (int f = 0; f < 3; ++f)
      for (std::size_t A = 0; A < nf; ++A) {
        for (int g = 0; g < 3; ++g)
          for (std::size_t k = prow[A]; k < prow[A + 1]; ++k) cols.push_back(g * nf + pcol[k]);
        row_ptr[f * nf + A + 1] = cols.size();
      }
    return SparseMatrix(3 * nf, std::move(row_ptr), std::move(cols));
  }

  void residual(std::span<const double> U, std::span<const double> Udot, double t,
                std::span<double> R) const {
    check_sizes(U, Udot, R.size());
    const std::size_t nf = space_->size();
    const double tau = time_sign();
    // linear part: tau M udot + d K u
    for (int f = 0; f < 3; ++f) {
      auto Rf = R.subspan(f * nf, nf);
      space_->mass().multiply(Udot.subspan(f * nf, nf), Rf);
      Vector ku = space_->stiffness().multiply(U.subspan(f * nf, nf));
      for (std::size_t i = 0; i < nf; ++i) Rf[i] = tau * Rf[i] + diffusion_[f] * ku[i];
    }
    element_loop(U, t, &R, nullptr);
    if (load_) {
      Vector b(size(), 0.0);
      load_(t, b);
      for (std::size_t i = 0; i < size(); ++i) R[i] -= b[i];
    }
    for (std::size_t i = 0; i < nf; ++i)
      if (constrained_[i]) R[i] = U[i];
  }

  Vector residual(std::span<const double> U, std::span<const double> Udot, double t) const {
    Vector R(size());
    residual(U, Udot, t, R);
    return R;
  }

  /// J = dR/dU + shift * dR/dUdot, written into a matrix from make_matrix().
  void tangent(std::span<const double> U, std::span<const double> Udot, double t, double shift,
               SparseMatrix& J) const {
    check_sizes(U, Udot, size());
    if (J.size() != size()) throw UsageError("tangent: matrix has the wrong size");
    J.set_zero();
    const auto& prow = space_->pattern_row_ptr();
    const auto& Mv = space_->mass().values();
    const auto& Kv = space_->stiffness().values();
    const std::size_t nf = space_->size();
    const std::size_t nnz = space_->pattern_cols().size();
    auto& Jv = J.values();
    const double tau = time_sign();
    // Constant reaction entries go straight in with the mass matrix:
    // gamma_h in (1,1), gamma_p in (2,2) and -alpha_ch in (2,0), or (0,2)
    // for the adjoint.
    const double coupling = -params_.alpha_ch();
    const int cf = kind_ == SystemKind::Adjoint ? 0 : 2;
    const int cg = 2 - cf;
    for (std::size_t A = 0; A < nf; ++A) {
      const std::size_t cnt = prow[A + 1] - prow[A];
      for (int f = 0; f < 3; ++f) {
        const double react = f == 1 ? params_.gamma_h : (f == 2 ? params_.gamma_p : 0.0);
        const std::size_t base = f * 3 * nnz + 3 * prow[A] + f * cnt;
        for (std::size_t k = prow[A]; k < prow[A + 1]; ++k)
          Jv[base + (k - prow[A])] = (shift * tau + react) * Mv[k] + diffusion_[f] * Kv[k];
      }
      const std::size_t base = cf * 3 * nnz + 3 * prow[A] + cg * cnt;
      for (std::size_t k = prow[A]; k < prow[A + 1]; ++k) Jv[base + (k - prow[A])] = coupling * Mv[k];
    }
    element_loop(U, t, nullptr, &J);
    for (std::size_t i = 0; i < nf; ++i)
      if (constrained_[i]) J.set_identity_row(i);
  }

  SparseMatrix tangent(std::span<const double> U, std::span<const double> Udot, double t,
                       double shift) const {
    SparseMatrix J = make_matrix();
    tangent(U, Udot, t, shift, J);
    return J;
  }

 private:
  void check_sizes(std::span<const double> U, std::span<const double> Udot, std::size_t n) const {
    if (U.size() != size() || Udot.size() != size() || n != size())
      throw UsageError("GalerkinSystem: state size mismatch");
  }

  void load_background(double t) const {
    if (kind_ == SystemKind::Forward) return;
    if (bg_time_ && *bg_time_ == t) return;
    background_->interpolate(t, 0, bg_phi_);
    background_->interpolate(t, 1, bg_sigma_);
    bg_time_ = t;
  }

  // Adds reaction integrals to R and/or J.
  void element_loop(std::span<const double> U, double t, std::span<double>* R, SparseMatrix* J) const {
    load_background(t);
    const auto& s = *space_;
    const int E = s.elements_per_side();
    const int nq = s.quadrature().points_per_direction;
    const std::size_t nf = s.size();
    const std::size_t nnz = s.pattern_cols().size();
    const auto& prow = s.pattern_row_ptr();
    const bool forward = kind_ == SystemKind::Forward;
    const bool adjoint = kind_ == SystemKind::Adjoint;

    std::array<std::size_t, 9> gidx{};
    std::array<std::array<double, 9>, 3> uloc{};
    std::array<double, 9> philoc{}, sigloc{};
    std::array<std::array<double, 9>, 3> rloc{};
    // Variable reaction coefficients for the tangent: C00, C01, C10 and the
    // phi-dependent part of C11, weighted by the quadrature weight. Entries
    // are [block][qy][qx].
    std::vector<double> cq(4 * static_cast<std::size_t>(nq) * nq);
    std::array<double, 81> kloc{};
    std::vector<double> T(static_cast<std::size_t>(nq) * 9);
    // (f, g) targets of the four variable blocks
    const std::array<std::array<int, 2>, 4> target =
        adjoint ? std::array<std::array<int, 2>, 4>{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}}
                : std::array<std::array<int, 2>, 4>{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

    for (int ey = 0; ey < E; ++ey)
      for (int ex = 0; ex < E; ++ex) {
        for (int b = 0; b < 3; ++b)
          for (int a = 0; a < 3; ++a) gidx[b * 3 + a] = s.global(ex, ey, a, b);
        for (int f = 0; f < 3; ++f)
          for (int i = 0; i < 9; ++i) uloc[f][i] = U[f * nf + gidx[i]];
        if (forward) {
          philoc = uloc[0];
          sigloc = uloc[1];
        } else {
          for (int i = 0; i < 9; ++i) {
            philoc[i] = bg_phi_[gidx[i]];
            sigloc[i] = bg_sigma_[gidx[i]];
          }
        }
        if (R)
          for (auto& r : rloc) r.fill(0.0);

        for (int qy = 0; qy < nq; ++qy)
          for (int qx = 0; qx < nq; ++qx) {
            const auto& bx = s.qp_basis(ex, qx);
            const auto& by = s.qp_basis(ey, qy);
            const double w = s.qp_weight(qx) * s.qp_weight(qy);
            std::array<double, 9> N{};
            for (int b = 0; b < 3; ++b)
              for (int a = 0; a < 3; ++a) N[b * 3 + a] = bx.value[a] * by.value[b];
            double phi = 0.0, sig = 0.0;
            for (int i = 0; i < 9; ++i) {
              phi += N[i] * philoc[i];
              sig += N[i] * sigloc[i];
            }
            const auto C = detail::reaction_jacobian(params_, phi, sig);

            if (R) {
              std::array<double, 3> r{};
              if (forward) {
                double p = 0.0;
                for (int i = 0; i < 9; ++i) p += N[i] * uloc[2][i];
                const auto& P = params_;
                r[0] = dF(P, phi) - tilt_m(P, sig) * dh(P, phi);
                r[1] = P.gamma_h * sig + P.gamma_ch() * sig * phi - P.S_h - P.S_ch() * phi;
                r[2] = P.gamma_p * p - P.alpha_h - P.alpha_ch() * phi;
              } else {
                std::array<double, 3> u{};
                for (int f = 0; f < 3; ++f)
                  for (int i = 0; i < 9; ++i) u[f] += N[i] * uloc[f][i];
                for (int f = 0; f < 3; ++f)
                  for (int g = 0; g < 3; ++g) r[f] += (adjoint ? C[g][f] : C[f][g]) * u[g];
              }
              for (int f = 0; f < 3; ++f)
                for (int i = 0; i < 9; ++i) rloc[f][i] += w * r[f] * N[i];
            }
            if (J) {
              const std::size_t q = static_cast<std::size_t>(qy) * nq + qx;
              const std::size_t stride = static_cast<std::size_t>(nq) * nq;
              cq[0 * stride + q] = w * C[0][0];
              cq[1 * stride + q] = w * C[0][1];
              cq[2 * stride + q] = w * C[1][0];
              cq[3 * stride + q] = w * params_.gamma_ch() * phi;
            }
          }

        if (R)
          for (int f = 0; f < 3; ++f)
            for (int i = 0; i < 9; ++i) (*R)[f * nf + gidx[i]] += rloc[f][i];
        if (J) {
          // sum factorisation: contract x first, then y
          const auto& m = s.element_map(static_cast<std::size_t>(ey) * E + ex);
          auto& Jv = J->values();
          const std::size_t stride = static_cast<std::size_t>(nq) * nq;
          for (int blk = 0; blk < 4; ++blk) {
            const double* c = &cq[blk * stride];
            for (int qy = 0; qy < nq; ++qy)
              for (int ai = 0; ai < 3; ++ai)
                for (int aj = 0; aj < 3; ++aj) {
                  double sum = 0.0;
                  for (int qx = 0; qx < nq; ++qx) {
                    const auto& bx = s.qp_basis(ex, qx);
                    sum += c[qy * nq + qx] * bx.value[ai] * bx.value[aj];
                  }
                  T[static_cast<std::size_t>(qy) * 9 + ai * 3 + aj] = sum;
                }
            for (int bi = 0; bi < 3; ++bi)
              for (int bj = 0; bj < 3; ++bj)
                for (int ai = 0; ai < 3; ++ai)
                  for (int aj = 0; aj < 3; ++aj) {
                    double sum = 0.0;
                    for (int qy = 0; qy < nq; ++qy) {
                      const auto& by = s.qp_basis(ey, qy);
                      sum += by.value[bi] * by.value[bj] * T[static_cast<std::size_t>(qy) * 9 + ai * 3 + aj];
                    }
                    kloc[(bi * 3 + ai) * 9 + bj * 3 + aj] = sum;
                  }
            const int f = target[blk][0], g = target[blk][1];
            for (int i = 0; i < 9; ++i) {
              const std::size_t A = gidx[i];
              const std::size_t cnt = prow[A + 1] - prow[A];
              const std::size_t base = f * 3 * nnz + 3 * prow[A] + g * cnt - prow[A];
              for (int j = 0; j < 9; ++j) Jv[base + m[i * 9 + j]] += kloc[i * 9 + j];
            }
          }
        }
      }
  }

  SpacePtr space_;
  ModelParams params_;
  SystemKind kind_;
  const Trajectory* background_ = nullptr;
  std::vector<bool> constrained_;
  std::array<double, 3> diffusion_{};
  LoadFunction load_;
  mutable std::optional<double> bg_time_;
  mutable Vector bg_phi_, bg_sigma_;
};

inline Vector assemble_residual(const GalerkinSystem& sys, const StateTriple& U,
                                const StateTriple& Udot, double t) {
  return sys.residual(U.data, Udot.data, t);
}

inline SparseMatrix assemble_tangent(const GalerkinSystem& sys, const StateTriple& U,
                                     const StateTriple& Udot, double t, double shift) {
  return sys.tangent(U.data, Udot.data, t, shift);
}

}  // namespace pfrecon
