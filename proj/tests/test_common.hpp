#pragma once

#include <cmath>
#include <numbers>

#include "pfrecon/model.hpp"
#include "pfrecon/spline.hpp"

namespace pfrecon::fixtures {

// A small, smooth parameter set on an 800 um square; not calibrated.
inline ModelParams small_params() {
  ModelParams p;
  p.eta = 1e4;
  p.D = 1e4;
  p.M = 1.0;
  p.ell = 40.0;
  p.gamma_h = 1.0;
  p.gamma_c = 2.0;
  p.S_h = 1.0;
  p.S_c = 0.5;
  p.gamma_p = 0.3;
  p.alpha_h = 0.1;
  p.alpha_c = 1.0;
  p.m_ref = 0.1;
  p.rho = 1.0;
  p.A = 0.2;
  p.sigma_l = 0.5;
  p.sigma_r = 0.1;
  p.c0_sigma = 1.0;
  p.c1_sigma = -0.5;
  p.c0_p = 0.1;
  p.c1_p = 1.0;
  return p;
}

inline double disc(double x, double y, double cx, double cy, double r, double w) {
  const double d = std::hypot(x - cx, y - cy);
  return 0.5 * (1.0 - std::tanh((d - r) / w));
}

inline Field disc_field(const SpacePtr& s, double cx, double cy, double r, double w) {
  return l2_project([=](double x, double y) { return disc(x, y, cx, cy, r, w); }, s, true, 2);
}

// Area of the intersection of two discs of radius r whose centres are d apart.
inline double lens_area(double r, double d) {
  if (d >= 2 * r) return 0.0;
  return 2 * r * r * std::acos(d / (2 * r)) - 0.5 * d * std::sqrt(4 * r * r - d * d);
}

inline double disc_area(double r) { return std::numbers::pi * r * r; }

}  // namespace pfrecon::fixtures
