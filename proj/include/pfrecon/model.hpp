#pragma once

// Model parameters and the constitutive functions of the three-field
// tumour model: double-well potential F, interpolation function h, and the
// nutrient-dependent tilt m(sigma).

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "pfrecon/errors.hpp"
#include "pfrecon/spline.hpp"

namespace pfrecon {

/// Which arctan prefactor the tilt uses. kOverPi has asymptotes m_ref*rho and
/// m_ref*A; kOverTwo is the alternative (rho - A)/2 variant.
enum class TiltForm { kOverPi, kOverTwo };

struct ModelParams {
  // diffusivities [um^2/day]
  double eta = 0.0;
  double D = 0.0;
  // phase field: mobility M [1/day], interface length ell [um]; lambda = M ell^2
  double M = 0.0;
  double ell = 0.0;
  // nutrient
  double gamma_h = 0.0;
  double gamma_c = 0.0;
  double S_h = 0.0;
  double S_c = 0.0;
  // tissue PSA
  double gamma_p = 0.0;
  double alpha_h = 0.0;
  double alpha_c = 0.0;
  // tilt
  double m_ref = 0.0;
  double rho = 0.0;
  double A = 0.0;
  double sigma_l = 0.0;
  double sigma_r = 0.0;
  TiltForm tilt_form = TiltForm::kOverPi;
  // initial laws sigma0 = c0_sigma + c1_sigma phi0, p0 = c0_p + c1_p phi0.
  // Required; there is no default.
  std::optional<double> c0_sigma, c1_sigma, c0_p, c1_p;

  double lambda() const noexcept { return M * ell * ell; }
  double gamma_ch() const noexcept { return gamma_c - gamma_h; }
  double S_ch() const noexcept { return S_c - S_h; }
  double alpha_ch() const noexcept { return alpha_c - alpha_h; }

  void validate() const {
    auto positive = [](double v, const char* key) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("model.") + key, "must be > 0");
    };
    positive(eta, "eta");
    positive(D, "D");
    positive(M, "M");
    positive(ell, "ell");
    positive(gamma_h, "gamma_h");
    positive(gamma_c, "gamma_c");
    positive(S_h, "S_h");
    positive(S_c, "S_c");
    positive(gamma_p, "gamma_p");
    positive(alpha_h, "alpha_h");
    positive(alpha_c, "alpha_c");
    positive(m_ref, "m_ref");
    positive(rho, "rho");
    positive(A, "A");
    positive(sigma_l, "sigma_l");
    positive(sigma_r, "sigma_r");
    auto required = [](const std::optional<double>& v, const char* key) {
      if (!v || !std::isfinite(*v)) throw ConfigError(std::string("model.") + key, "required entry missing");
    };
    required(c0_sigma, "c0_sigma");
    required(c1_sigma, "c1_sigma");
    required(c0_p, "c0_p");
    required(c1_p, "c1_p");
  }
};

// F(s) = M s^2 (1 - s)^2
inline double potential_F(const ModelParams& p, double s) { return p.M * s * s * (1 - s) * (1 - s); }
inline double dF(const ModelParams& p, double s) { return 2.0 * p.M * s * (1 - s) * (1 - 2 * s); }
inline double d2F(const ModelParams& p, double s) { return p.M * (2.0 - 12.0 * s + 12.0 * s * s); }

// h(s) = M s^2 (3 - 2 s)
inline double interp_h(const ModelParams& p, double s) { return p.M * s * s * (3 - 2 * s); }
inline double dh(const ModelParams& p, double s) { return 6.0 * p.M * s * (1 - s); }
inline double d2h(const ModelParams& p, double s) { return 6.0 * p.M * (1 - 2 * s); }

inline double tilt_factor(const ModelParams& p) {
  return p.tilt_form == TiltForm::kOverPi ? (p.rho - p.A) / std::numbers::pi : (p.rho - p.A) / 2.0;
}

inline double tilt_m(const ModelParams& p, double sigma) {
  return p.m_ref * ((p.rho + p.A) / 2.0 + tilt_factor(p) * std::atan((sigma - p.sigma_l) / p.sigma_r));
}

inline double dm(const ModelParams& p, double sigma) {
  const double s = (sigma - p.sigma_l) / p.sigma_r;
  return p.m_ref * tilt_factor(p) / p.sigma_r / (1.0 + s * s);
}

/// sigma0 and p0 from phi0 through the affine initial laws. Affine maps act
/// on coefficients exactly because the basis reproduces constants.
inline std::pair<Field, Field> initial_laws(const ModelParams& p, const Field& phi0) {
  p.validate();
  Field sigma0(phi0.space_ptr()), p0(phi0.space_ptr());
  for (std::size_t i = 0; i < phi0.size(); ++i) {
    sigma0[i] = *p.c0_sigma + *p.c1_sigma * phi0[i];
    p0[i] = *p.c0_p + *p.c1_p * phi0[i];
  }
  return {std::move(sigma0), std::move(p0)};
}

}  // namespace pfrecon
