#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pfrecon/metrics.hpp"
#include "test_common.hpp"

using namespace pfrecon;
using fixtures::disc;

namespace {

constexpr double kL = 800.0;

MetricsOptions grid128() {
  MetricsOptions o;
  o.cells_per_side = 128;
  return o;
}

// Monte-Carlo e_L2 and union-region CCC of two analytic discs.
std::pair<double, double> mc_l2_ccc(double cx1, double r1, double cx2, double r2, double w, int n = 400000) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, kL);
  double diff = 0, ref = 0, ws = 0, sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int i = 0; i < n; ++i) {
    const double x = u(rng), y = u(rng);
    const double a = disc(x, y, cx1, 400, r1, w), b = disc(x, y, cx2, 400, r2, w);
    diff += (a - b) * (a - b);
    ref += a * a;
    if (a > 0.5 || b > 0.5) {
      ws += 1;
      sa += a;
      sb += b;
      saa += a * a;
      sbb += b * b;
      sab += a * b;
    }
  }
  const double ma = sa / ws, mb = sb / ws;
  const double va = saa / ws - ma * ma, vb = sbb / ws - mb * mb, cov = sab / ws - ma * mb;
  return {std::sqrt(diff / ref), 2 * cov / (va + vb + (ma - mb) * (ma - mb))};
}

}  // namespace

TEST(Metrics, DiscAreaMatchesClosedForm) {
  auto s = make_space(64, kL);
  for (double r : {100.0, 150.0, 220.0}) {
    const Field f = fixtures::disc_field(s, 400, 400, r, 8);
    EXPECT_NEAR(tumour_volume(f, grid128()) / fixtures::disc_area(r), 1.0, 0.01) << "r=" << r;
  }
}

TEST(Metrics, IdenticalFieldsArePerfect) {
  auto s = make_space(32, kL);
  const Field f = fixtures::disc_field(s, 380, 420, 150, 10);
  const auto r = metrics(f, f);
  EXPECT_DOUBLE_EQ(r.dsc, 1.0);
  EXPECT_DOUBLE_EQ(r.e_V, 0.0);
  EXPECT_DOUBLE_EQ(r.e_L2, 0.0);
  EXPECT_DOUBLE_EQ(r.ccc, 1.0);
}

TEST(Metrics, ShiftedDiscsMatchLensOracle) {
  auto s = make_space(64, kL);
  const double r = 150;
  const Field a = fixtures::disc_field(s, 400, 400, r, 8);
  for (double d : {30.0, 100.0, 200.0}) {
    const Field b = fixtures::disc_field(s, 400 + d, 400, r, 8);
    const auto m = metrics(a, b, grid128());
    const double dsc = fixtures::lens_area(r, d) / fixtures::disc_area(r);
    EXPECT_NEAR(m.dsc, dsc, 0.01) << "d=" << d;
    EXPECT_NEAR(m.e_V, 0.0, 0.01);
  }
}

TEST(Metrics, ConcentricDiscsVolumeError) {
  auto s = make_space(64, kL);
  const Field a = fixtures::disc_field(s, 400, 400, 200, 8);
  const Field b = fixtures::disc_field(s, 400, 400, 150, 8);
  const auto m = metrics(a, b, grid128());
  EXPECT_NEAR(m.e_V, 1.0 - 150.0 * 150.0 / (200.0 * 200.0), 0.01);
  EXPECT_NEAR(m.dsc, 2.0 * 150 * 150 / (200.0 * 200 + 150 * 150), 0.01);
  // reconstruction larger than reference gives a negative signed error
  EXPECT_LT(metrics(b, a, grid128()).e_V, 0.0);
}

TEST(Metrics, L2ErrorAndCccMatchMonteCarlo) {
  auto s = make_space(64, kL);
  const double w = 20;
  const Field a = fixtures::disc_field(s, 400, 400, 160, w);
  for (auto [cx, r] : {std::pair{440.0, 160.0}, std::pair{400.0, 120.0}}) {
    const Field b = fixtures::disc_field(s, cx, 400, r, w);
    const auto m = metrics(a, b, grid128());
    const auto [el2, ccc] = mc_l2_ccc(400, 160, cx, r, w);
    EXPECT_NEAR(m.e_L2 / el2, 1.0, 0.01);
    EXPECT_NEAR(m.ccc, ccc, 0.01);
  }
}

TEST(Metrics, DiceAndCccAreSymmetric) {
  auto s = make_space(32, kL);
  const Field a = fixtures::disc_field(s, 400, 400, 150, 10);
  const Field b = fixtures::disc_field(s, 450, 380, 120, 15);
  const auto ab = metrics(a, b), ba = metrics(b, a);
  EXPECT_NEAR(ab.dsc, ba.dsc, 1e-14);
  EXPECT_NEAR(ab.ccc, ba.ccc, 1e-12);
}

TEST(Metrics, DisjointDiscsHaveZeroDice) {
  auto s = make_space(32, kL);
  const Field a = fixtures::disc_field(s, 200, 400, 100, 5);
  const Field b = fixtures::disc_field(s, 600, 400, 100, 5);
  EXPECT_NEAR(metrics(a, b).dsc, 0.0, 1e-12);
}

TEST(Metrics, ZeroReferenceVolumeIsAnError) {
  auto s = make_space(16, kL);
  const Field zero = Field::constant(s, 0.0);
  const Field b = fixtures::disc_field(s, 400, 400, 100, 5);
  EXPECT_THROW(metrics(zero, b), DomainError);
}

TEST(Metrics, IntersectionRegionIsEmptyForDisjointDiscs) {
  auto s = make_space(32, kL);
  const Field a = fixtures::disc_field(s, 200, 400, 100, 5);
  const Field b = fixtures::disc_field(s, 600, 400, 100, 5);
  MetricsOptions o;
  o.ccc_region = CccRegion::Intersection;
  EXPECT_TRUE(std::isnan(metrics(a, b, o).ccc));
}

TEST(Metrics, MixedMeshesShareOneGrid) {
  auto fine = make_space(64, kL);
  auto coarse = make_space(32, kL);
  const Field a = fixtures::disc_field(fine, 400, 400, 150, 10);
  const Field b = fixtures::disc_field(coarse, 400, 400, 150, 10);
  const auto m = metrics(a, b);
  EXPECT_GT(m.dsc, 0.99);
  EXPECT_LT(std::abs(m.e_V), 0.01);
  EXPECT_THROW(metrics(a, fixtures::disc_field(make_space(32, 900.0), 400, 400, 150, 10)), UsageError);
}
