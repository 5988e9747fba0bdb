#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pfrecon/io.hpp"
#include "test_common.hpp"

using namespace pfrecon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "pfrecon_test_io";
  fs::create_directories(d);
  return d / name;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST(FieldFile, RoundTripIsExact) {
  auto s = make_space(8, 800);
  Field f = fixtures::disc_field(s, 410, 390, 150, 20);
  f[3] = 1.0 / 3.0;
  f[5] = -2.5e-300;
  const auto p = scratch("round.pff");
  write_field(p, f, "0123456789abcdef");
  const Field g = read_field(p);
  EXPECT_TRUE(g.space().same_as(f.space()));
  EXPECT_EQ(g.coefficients(), f.coefficients());
  EXPECT_EQ(lines_of(p).front(), "PFFIELD v1 8 2 800");
  EXPECT_EQ(lines_of(p).back(), "# config 0123456789abcdef");
}

TEST(FieldFile, MalformedInputsRejected) {
  auto s = make_space(2, 1.0);
  const auto p = scratch("bad.pff");
  const std::string body = "0\n0\n0\n0\n0.5\n0\n0\n0\n0\n0\n0\n0\n0\n0\n0\n0\n";  // 16 = 4 x 4 coefficients
  write_field(p, Field::constant(s, 0.0));
  EXPECT_NO_THROW(read_field(p));
  for (const std::string& text : {std::string(""), "PFFIELD v2 2 2 1\n" + body, "PFFIELD v1 2 3 1\n" + body,
                                  "PFFIELD v1 2 2 -1\n" + body, "PFFIELD v1 2 2 1 extra\n" + body,
                                  "PFFIELD v1 2 2 1\n" + body + "0\n", std::string("PFFIELD v1 2 2 1\n0\n"),
                                  "PFFIELD v1 2 2 1\nzero\n" + body, "PFFIELD v1 2 2 1\nnan\n" + body,
                                  "PFFIELD v1 2 2 1\n1.0abc\n" + body}) {
    write_text(p, text);
    EXPECT_THROW(read_field(p), FormatError) << text.substr(0, 24);
  }
  EXPECT_THROW(read_field(scratch("missing.pff")), FormatError);
}

TEST(FieldFile, CommentsAndCrlfTolerated) {
  const auto p = scratch("crlf.pff");
  std::string text = "PFFIELD v1 2 2 1\r\n# note\r\n";
  for (int i = 0; i < 16; ++i) text += (i == 5 ? "0.25\r\n" : "0\r\n");
  write_text(p, text);
  EXPECT_DOUBLE_EQ(read_field(p)[5], 0.25);
}

TEST(Vtk, StructuredPointsLayout) {
  auto s = make_space(4, 100);
  const Field f = fixtures::disc_field(s, 50, 50, 30, 5);
  const Field g = Field::constant(s, 0.0);
  const auto p = scratch("out.vtk");
  write_vtk(p, {{"phi", &f}, {"zero", &g}}, "abc");
  const auto l = lines_of(p);
  ASSERT_GE(l.size(), 10u);
  EXPECT_EQ(l[1], "pfrecon config abc");
  EXPECT_EQ(l[4], "DIMENSIONS 17 17 1");
  EXPECT_EQ(l[6], "SPACING 6.25 6.25 1");
  EXPECT_EQ(l[7], "POINT_DATA 289");
  EXPECT_EQ(l.size(), 8u + 2 * (2 + 289));
  // the centre sample of phi sits at index 8 * 17 + 8
  EXPECT_NEAR(std::stod(l[10 + 8 * 17 + 8]), evaluate(f, {50, 50}), 1e-15);
}

TEST(History, HeaderAndRows) {
  const auto p = scratch("history.csv");
  {
    HistoryWriter w(p, "feedbeef00000000");
    ReconRecord r;
    r.j = 0;
    r.mu = 0.5;
    r.theta = std::numeric_limits<double>::infinity();
    r.J = 2.0;
    r.grad_norm = 3.0;
    w.append(r);
    r.j = 1;
    r.metrics0 = MetricsReport{0.1, 0.9, 0.2, 0.8, 1, 1};
    w.append(r);
  }
  const auto l = lines_of(p);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_EQ(l[0], "# config_hash=feedbeef00000000");
  EXPECT_EQ(l[1], kHistoryHeader);
  EXPECT_EQ(l[2], "0,0.5,inf,2,3,nan,nan,nan,nan,nan,nan,nan,nan");
  EXPECT_EQ(l[3], "1,0.5,inf,2,3,0.10000000000000001,0.90000000000000002,0.20000000000000001,0.80000000000000004,"
                  "nan,nan,nan,nan");
}
