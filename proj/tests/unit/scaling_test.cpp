#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "nco/error.hpp"
#include "nco/records.hpp"
#include "nco/scaling.hpp"

namespace s = nco::scaling;
namespace m = nco::model;

namespace {

std::vector<s::XY> power_points(double xc, double alpha, std::vector<double> xs) {
  std::vector<s::XY> pts;
  for (double x : xs) pts.push_back({x, std::pow(xc / x, alpha)});
  return pts;
}

std::vector<nco::records::Table9Row> table9() { return nco::records::load_table9(NCO_TEST_FIXTURE_DIR); }

}  // namespace

TEST(Grid, MatchesPublishedShapes) {
  const auto g = s::grid();
  ASSERT_EQ(g.size(), 12u);
  bool found = false;
  for (const auto& c : g) {
    EXPECT_TRUE(c.canonical());
    if (c.depth == 24 && c.width == 256) {
      found = true;
      EXPECT_EQ(c.heads, 16);
      EXPECT_EQ(c.qkv_dim, 16);
      EXPECT_EQ(c.ffn_dim, 1024);
    }
  }
  EXPECT_TRUE(found);
  for (int w : {128, 256, 512}) {
    std::int64_t prev = 0;
    for (int d : {6, 12, 24, 42}) {
      const auto n = m::param_count(m::grid_config(d, w));
      EXPECT_GT(n, prev);
      prev = n;
    }
  }
}

TEST(Flops, ReproducesPublishedComputeAndIsLinear) {
  for (const auto& row : nco::records::load_table12(NCO_TEST_FIXTURE_DIR)) {
    const double got = s::flops_per_solution(m::grid_config(row.depth, row.width), row.n);
    EXPECT_NEAR(got / row.gflops, 1.0, 0.05) << row.depth << "x" << row.width;
  }
  const auto c = m::grid_config(12, 256);
  const double one = s::flops_per_solution(c, 100, 1);
  EXPECT_EQ(s::flops_per_solution(c, 100, 2), 2 * one);
  EXPECT_EQ(s::flops_per_solution(c, 100, 16), 16 * one);
  EXPECT_DOUBLE_EQ(s::flops_per_solution(2000, 10), 2.0 * 2000 * 10 * 12 / 1e9);
  EXPECT_DOUBLE_EQ(s::flops_per_solution(4000, 10), 2 * s::flops_per_solution(2000, 10));
}

TEST(Accuracy, Definitions) {
  const std::vector<double> y{1, 2, 3, 4};
  const auto perfect = s::r2_mape(y, y);
  EXPECT_EQ(perfect.r2, 1.0);
  EXPECT_EQ(perfect.mape, 0.0);
  const std::vector<double> mean(4, 2.5);
  EXPECT_NEAR(s::r2_mape(y, mean).r2, 0.0, 1e-15);
  EXPECT_NEAR(s::r2_mape(std::vector<double>{2, 4}, std::vector<double>{3, 3}).mape, 37.5, 1e-12);
  EXPECT_THROW(s::r2_mape(std::vector<double>{2, 2}, std::vector<double>{2, 2}), nco::ValidationError);
  EXPECT_THROW(s::r2_mape(std::vector<double>{1}, std::vector<double>{1}), nco::ValidationError);
  EXPECT_THROW(s::r2_mape(std::vector<double>{0, 1}, std::vector<double>{0, 1}), nco::ValidationError);
}

TEST(PowerFit, ExactRecoveryBothMethods) {
  const auto pts = power_points(2.0, 0.5, {1, 2, 4, 8});
  for (auto method : {s::FitMethod::kGapSpace, s::FitMethod::kLogLinear}) {
    const auto f = s::fit_power(pts, method);
    EXPECT_NEAR(f.alpha, 0.5, 1e-9);
    EXPECT_NEAR(f.x_c, 2.0, 1e-9);
    EXPECT_NEAR(f.r2, 1.0, 1e-9);
    EXPECT_NEAR(f.mape, 0.0, 1e-9);
    EXPECT_EQ(f.n_points, 4);
    EXPECT_EQ(f.method, method);
  }
  const auto big = power_points(3.7e6, 0.83, {1e5, 3e5, 1e6, 4e6, 2e7});
  const auto f = s::fit_power(big);
  EXPECT_NEAR(f.alpha / 0.83, 1.0, 1e-9);
  EXPECT_NEAR(f.x_c / 3.7e6, 1.0, 1e-9);
}

TEST(PowerFit, ScaleEquivariance) {
  std::vector<s::XY> pts{{1.32, 0.464}, {2.60, 0.225}, {5.17, 0.106}, {9.02, 0.070}};
  for (auto method : {s::FitMethod::kGapSpace, s::FitMethod::kLogLinear}) {
    const auto a = s::fit_power(pts, method);
    auto scaled = pts;
    for (auto& p : scaled) p.x *= 1e6;
    const auto b = s::fit_power(scaled, method);
    EXPECT_NEAR(b.alpha, a.alpha, 1e-9);
    EXPECT_NEAR(b.x_c / (a.x_c * 1e6), 1.0, 1e-9);
    EXPECT_NEAR(b.mape, a.mape, 1e-7);
  }
}

TEST(PowerFit, RejectsBadInput) {
  EXPECT_THROW(s::fit_power(std::vector<s::XY>{{1, 1}}), nco::ValidationError);
  EXPECT_THROW(s::fit_power(std::vector<s::XY>{{1, 1}, {0, 2}}), nco::ValidationError);
  EXPECT_THROW(s::fit_power(std::vector<s::XY>{{1, 1}, {2, -2}}), nco::ValidationError);
  EXPECT_THROW(s::fit_power(std::vector<s::XY>{{2, 1}, {2, 3}}), nco::ValidationError);
  EXPECT_EQ(s::parse_fit_method("gap"), s::FitMethod::kGapSpace);
  EXPECT_EQ(s::parse_fit_method("log"), s::FitMethod::kLogLinear);
  EXPECT_THROW(s::parse_fit_method("spline"), nco::ValidationError);
}

TEST(PowerFit, PublishedDepthAndWidthCurves) {
  const auto rows = table9();
  auto curve = [&](auto pick) {
    std::vector<s::XY> pts;
    for (const auto& r : rows)
      if (pick(r)) pts.push_back({static_cast<double>(m::param_count(m::grid_config(r.depth, r.width))), r.gap});
    return pts;
  };
  const auto w128 = s::fit_power(curve([](const auto& r) { return r.width == 128; }));
  EXPECT_GE(w128.alpha, 0.88);
  EXPECT_LE(w128.alpha, 1.15);
  const auto d6 = s::fit_power(curve([](const auto& r) { return r.depth == 6; }));
  EXPECT_GE(d6.alpha, 0.24);
  EXPECT_LE(d6.alpha, 0.40);
}

TEST(Bivariate, ExactRecoveryOnGrid) {
  std::vector<s::XYZ> pts;
  for (const auto& c : s::grid())
    pts.push_back({double(c.depth), double(c.width), std::pow(2.0 / c.depth, 1.0) * std::pow(3.0 / c.width, 0.5)});
  for (auto method : {s::FitMethod::kLogLinear, s::FitMethod::kGapSpace}) {
    const auto f = s::fit_bivariate(pts, method);
    EXPECT_NEAR(f.beta1, 1.0, 1e-9);
    EXPECT_NEAR(f.beta2, 0.5, 1e-9);
    EXPECT_NEAR(f.beta1 * std::log(f.c1), f.beta2 * std::log(f.c2), 1e-9);
    for (const auto& p : pts) EXPECT_NEAR(f.predict(p.x1, p.x2) / p.y, 1.0, 1e-9);
    EXPECT_NEAR(f.r2, 1.0, 1e-9);
  }
  // normalizers come back exactly when they obey the even split
  const double b1 = 0.7, b2 = 0.35, c1 = 5.0, c2 = std::exp(b1 * std::log(c1) / b2);
  std::vector<s::XYZ> split;
  for (const auto& c : s::grid())
    split.push_back({double(c.depth), double(c.width), std::pow(c1 / c.depth, b1) * std::pow(c2 / c.width, b2)});
  const auto f = s::fit_bivariate(split);
  EXPECT_NEAR(f.c1 / c1, 1.0, 1e-9);
  EXPECT_NEAR(f.c2 / c2, 1.0, 1e-9);
}

TEST(Bivariate, RankDeficientDesignThrows) {
  std::vector<s::XYZ> pts{{6, 128, 0.4}, {12, 128, 0.2}, {24, 128, 0.1}};
  EXPECT_THROW(s::fit_bivariate(pts), nco::ValidationError);
  std::vector<s::XYZ> collinear{{2, 4, 0.4}, {4, 16, 0.2}, {8, 64, 0.1}};
  EXPECT_THROW(s::fit_bivariate(collinear), nco::ValidationError);
  EXPECT_THROW(s::fit_bivariate(std::vector<s::XYZ>{{2, 4, 0.4}, {4, 8, 0.2}}), nco::ValidationError);
}

TEST(Bivariate, PublishedParamsRatioExponents) {
  std::vector<s::DepthWidthGap> rows;
  for (const auto& r : table9()) rows.push_back({r.depth, r.width, r.gap});
  const auto na = s::params_ratio_points(rows);
  ASSERT_EQ(na.size(), 12u);
  EXPECT_DOUBLE_EQ(na[0].x2, 6.0 / 128.0);
  const auto f = s::fit_bivariate(na);
  EXPECT_NEAR(f.beta1, 0.5, 0.15);
  EXPECT_NEAR(f.beta2, 0.4, 0.15);
  const auto dw = s::fit_bivariate(s::depth_width_points(rows));
  EXPECT_GT(dw.beta1, dw.beta2);
}

TEST(Shifted, ExactRecovery) {
  std::vector<s::XY> pts;
  for (double t : {1.0, 2.0, 4.0, 8.0, 16.0}) pts.push_back({t, 3.0 / t + 0.1});
  const auto f = s::fit_shifted(pts);
  EXPECT_NEAR(f.alpha_t / 3.0, 1.0, 1e-6);
  EXPECT_NEAR(f.beta_t, 1.0, 1e-6);
  EXPECT_NEAR(f.gamma / 0.1, 1.0, 1e-6);
  EXPECT_TRUE(f.converged);
  EXPECT_LT(f.sse, 1e-18);
}

TEST(Shifted, PurePowerLawHasNoFloor) {
  const auto pts = power_points(2.5, 0.7, {0.5, 1, 2, 4, 8, 16});
  const auto f = s::fit_shifted(pts);
  EXPECT_LE(f.gamma, 1e-6);
  EXPECT_GE(f.gamma, 0.0);
  EXPECT_NEAR(f.beta_t, 0.7, 1e-6);
}

TEST(Shifted, NeverWorseThanPowerLawAndFloorNonnegative) {
  std::vector<s::XY> pts;
  for (const auto& r : table9())
    if (r.width == 128) pts.push_back({r.time_minutes, r.gap});
  const auto f = s::fit_shifted(pts);
  EXPECT_GE(f.gamma, 0.0);
  EXPECT_GT(f.beta_t, 0.0);
  const auto p = s::fit_power(pts);
  EXPECT_LE(f.sse, s::sse(pts, [&](double x) { return p.predict(x); }) * (1 + 1e-12));
  // rising data pushes toward a flat fit but keeps the constraint
  const std::vector<s::XY> odd{{1, 0.1}, {2, 0.2}, {3, 0.3}, {4, 0.5}};
  EXPECT_GE(s::fit_shifted(odd).gamma, 0.0);
  EXPECT_THROW(s::fit_shifted(std::vector<s::XY>{{1, 1}, {2, 0.5}, {3, 0.3}}), nco::ValidationError);
  EXPECT_THROW(s::fit_shifted(std::vector<s::XY>{{1, 1}, {2, 0.5}, {3, 0.3}, {0, 0.2}}), nco::ValidationError);
}
