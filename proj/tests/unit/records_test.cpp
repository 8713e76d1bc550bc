#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "nco/error.hpp"
#include "nco/records.hpp"

namespace r = nco::records;
namespace s = nco::scaling;
namespace m = nco::model;

namespace {

std::vector<r::EvalRecord> table9_records() {
  return r::read_eval_csv(std::filesystem::path(NCO_TEST_FIXTURE_DIR) / "table9.csv");
}

r::EvalRecord synthetic(int depth, int width, double gap) {
  r::EvalRecord rec;
  rec.config = m::grid_config(depth, width);
  rec.params = m::param_count(rec.config);
  rec.dataset = "tsp10-uniform";
  rec.n = 10;
  rec.instances = 200;
  rec.mean_gap = gap;
  rec.wall_seconds = 12.5;
  rec.gflops = s::flops_per_solution(rec.config, 10, 1);
  rec.samples = 32000;
  return rec;
}

}  // namespace

TEST(EvalCsv, RoundTripIsExact) {
  std::vector<r::EvalRecord> rows{synthetic(2, 32, 3.0 / 7.0), synthetic(4, 64, 1e-17)};
  rows[1].decode = "beam:16";
  rows[1].wall_seconds = 0.1 + 0.2;
  std::stringstream ss;
  r::write_eval_csv(ss, rows);
  const auto back = r::read_eval_csv(ss);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].config, rows[i].config);
    EXPECT_EQ(back[i].params, rows[i].params);
    EXPECT_EQ(back[i].decode, rows[i].decode);
    EXPECT_EQ(back[i].dataset, rows[i].dataset);
    EXPECT_EQ(back[i].n, rows[i].n);
    EXPECT_EQ(back[i].instances, rows[i].instances);
    EXPECT_EQ(back[i].mean_gap, rows[i].mean_gap);
    EXPECT_EQ(back[i].wall_seconds, rows[i].wall_seconds);
    EXPECT_EQ(back[i].gflops, rows[i].gflops);
    EXPECT_EQ(back[i].samples, rows[i].samples);
  }
}

TEST(EvalCsv, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(r::read_eval_csv(empty), nco::ValidationError);
  std::istringstream unknown("a,b\n1,2\n");
  EXPECT_THROW(r::read_eval_csv(unknown), nco::ValidationError);
  std::istringstream ragged("depth,width,gap_pct,time_min\n6,128,0.4\n");
  EXPECT_THROW(r::read_eval_csv(ragged), nco::ValidationError);
  std::istringstream text("depth,width,gap_pct,time_min\n6,128,abc,0.3\n");
  EXPECT_THROW(r::read_eval_csv(text), nco::ValidationError);
  std::istringstream negative(std::string(r::kEvalCsvHeader) +
                              "\n2,32,4,8,128,1000,greedy,x,10,5,-1,0,0,0\n");
  EXPECT_THROW(r::read_eval_csv(negative), nco::ValidationError);
  EXPECT_THROW(r::read_eval_csv(std::filesystem::path("/nonexistent/records.csv")), nco::ValidationError);
}

TEST(EvalCsv, CommentsAndBlankLinesAreSkipped) {
  std::istringstream in("# header comment\n\ndepth,width,gap_pct,time_min\n\n6,128,0.464,0.34\n");
  const auto rows = r::read_eval_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].mean_gap, 0.464);
}

TEST(EvalCsv, FixtureSchemasBecomeRecords) {
  const auto t9 = table9_records();
  ASSERT_EQ(t9.size(), 12u);
  for (const auto& rec : t9) {
    EXPECT_EQ(rec.config, m::grid_config(rec.config.depth, rec.config.width));
    EXPECT_EQ(rec.params, m::param_count(rec.config));
    EXPECT_EQ(rec.decode, "greedy");
    EXPECT_EQ(rec.n, 100);
    EXPECT_EQ(rec.instances, 10000);
    EXPECT_DOUBLE_EQ(rec.samples, 60000.0 * 1024.0);
    EXPECT_DOUBLE_EQ(rec.gflops, s::flops_per_solution(rec.config, 100, 1));
  }
  EXPECT_DOUBLE_EQ(t9[0].mean_gap, 0.464);
  EXPECT_DOUBLE_EQ(t9[0].wall_seconds, 60.0 * 0.34);

  const auto t13 = r::read_eval_csv(std::filesystem::path(NCO_TEST_FIXTURE_DIR) / "table13.csv");
  ASSERT_EQ(t13.size(), 84u);
  EXPECT_EQ(t13[0].decode, "greedy");
  EXPECT_EQ(t13[1].decode, "beam:2");
  EXPECT_DOUBLE_EQ(t13[1].gflops, 2.0 * t13[0].gflops);
  EXPECT_EQ(t13[1].wall_seconds, 0.0);
}

TEST(FitRecords, ParsersRoundTrip) {
  for (auto f : {r::FitForm::kParams, r::FitForm::kSamples, r::FitForm::kCompute, r::FitForm::kDepthWidth,
                 r::FitForm::kParamsRatio, r::FitForm::kTime})
    EXPECT_EQ(r::parse_fit_form(r::to_string(f)), f);
  EXPECT_EQ(r::parse_fit_form("DW"), r::FitForm::kDepthWidth);
  EXPECT_THROW(r::parse_fit_form("X"), nco::ValidationError);
  EXPECT_EQ(r::parse_group_by("depth"), r::GroupBy::kDepth);
  EXPECT_EQ(r::parse_group_by("width"), r::GroupBy::kWidth);
  EXPECT_EQ(r::parse_group_by("none"), r::GroupBy::kNone);
  EXPECT_THROW(r::parse_group_by("beam"), nco::ValidationError);
}

TEST(FitRecords, FilterAndGrouping) {
  const auto rows = table9_records();
  r::RecordFilter w128;
  w128.width = 128;
  const auto one = r::fit_records(rows, r::FitForm::kParams, std::nullopt, w128, r::GroupBy::kNone);
  ASSERT_EQ(one.curves.size(), 1u);
  EXPECT_EQ(one.curves[0].label, "all");
  EXPECT_EQ(one.curves[0].points.size(), 4u);
  for (std::size_t i = 1; i < one.curves[0].points.size(); ++i)
    EXPECT_LT(one.curves[0].points[i - 1].x, one.curves[0].points[i].x);

  const auto by_width = r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kWidth);
  ASSERT_EQ(by_width.curves.size(), 3u);
  EXPECT_EQ(by_width.curves[0].label, "W=128");
  EXPECT_EQ(by_width.curves[2].label, "W=512");
  EXPECT_DOUBLE_EQ(by_width.curves[0].power->alpha, one.curves[0].power->alpha);

  const auto by_depth = r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kDepth);
  ASSERT_EQ(by_depth.curves.size(), 4u);
  EXPECT_EQ(by_depth.curves[0].label, "D=6");

  r::RecordFilter none;
  none.depth = 7;
  EXPECT_THROW(r::fit_records(rows, r::FitForm::kParams, std::nullopt, none, r::GroupBy::kNone),
               nco::ValidationError);
  r::RecordFilter beam;
  beam.decode = "beam:4";
  EXPECT_THROW(r::fit_records(rows, r::FitForm::kParams, std::nullopt, beam, r::GroupBy::kNone),
               nco::ValidationError);
}

TEST(FitRecords, PublishedCurvesAndGlobalFit) {
  const auto rows = table9_records();
  const auto by_width = r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kWidth);
  const auto by_depth = r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kDepth);
  const auto global = r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kNone);
  EXPECT_EQ(global.method, s::FitMethod::kGapSpace);
  ASSERT_EQ(global.curves.size(), 1u);
  const double global_mape = global.curves[0].power->mape;
  EXPECT_GE(global_mape, 25.0);
  EXPECT_LE(global_mape, 45.0);

  for (const auto& c : by_width.curves) {
    if (c.label == "W=128" || c.label == "W=256") {
      EXPECT_GE(c.power->alpha, 0.88) << c.label;
      EXPECT_LE(c.power->alpha, 1.15) << c.label;
    }
  }
  for (const auto& c : by_depth.curves) {
    EXPECT_GE(c.power->alpha, 0.20) << c.label;
    EXPECT_LE(c.power->alpha, 0.45) << c.label;
  }
  for (const auto* rep : {&by_width, &by_depth}) {
    for (const auto& c : rep->curves) {
      EXPECT_GT(c.power->r2, 0.95) << c.label;
      EXPECT_LT(c.power->mape, global_mape) << c.label;
    }
  }
}

TEST(FitRecords, BivariateForms) {
  const auto rows = table9_records();
  const auto na = r::fit_records(rows, r::FitForm::kParamsRatio, std::nullopt, {}, r::GroupBy::kNone);
  EXPECT_EQ(na.method, s::FitMethod::kLogLinear);
  ASSERT_EQ(na.curves.size(), 1u);
  ASSERT_TRUE(na.curves[0].bivariate.has_value());
  EXPECT_EQ(na.curves[0].points2.size(), 12u);
  EXPECT_GE(na.curves[0].bivariate->beta1, 0.35);
  EXPECT_LE(na.curves[0].bivariate->beta1, 0.65);
  EXPECT_GE(na.curves[0].bivariate->beta2, 0.25);
  EXPECT_LE(na.curves[0].bivariate->beta2, 0.55);
  EXPECT_GT(na.param_constant, 0.0);

  const auto dw = r::fit_records(rows, r::FitForm::kDepthWidth, std::nullopt, {}, r::GroupBy::kNone);
  ASSERT_TRUE(dw.curves[0].bivariate.has_value());
  EXPECT_DOUBLE_EQ(dw.curves[0].points2[0].x1, 6.0);
  EXPECT_DOUBLE_EQ(dw.curves[0].points2[0].x2, 128.0);
}

TEST(FitRecords, SyntheticRecoveryThroughRecords) {
  std::vector<r::EvalRecord> rows;
  for (const auto& c : s::grid()) {
    auto rec = synthetic(c.depth, c.width, 1.0);
    rec.mean_gap = std::pow(3e4 / static_cast<double>(rec.params), 0.7);
    rec.samples = 1000.0 * c.depth;
    rec.wall_seconds = 60.0 * (0.5 + 2.0 * c.depth);
    rows.push_back(rec);
  }
  for (auto method : {s::FitMethod::kGapSpace, s::FitMethod::kLogLinear}) {
    const auto n = r::fit_records(rows, r::FitForm::kParams, method, {}, r::GroupBy::kNone);
    EXPECT_NEAR(n.curves[0].power->alpha, 0.7, 1e-6);
    EXPECT_NEAR(n.curves[0].power->x_c / 3e4, 1.0, 1e-6);
  }
  // samples and time carry their own x columns
  std::vector<r::EvalRecord> time_rows;
  for (int d : {1, 2, 4, 8, 16, 32}) {
    auto rec = synthetic(2, 32, 1.0);
    rec.wall_seconds = 60.0 * d;
    rec.samples = 500.0 * d;
    rec.mean_gap = std::pow(2.0 / d, 0.5) + 0.05;
    time_rows.push_back(rec);
  }
  const auto t = r::fit_records(time_rows, r::FitForm::kTime, std::nullopt, {}, r::GroupBy::kNone);
  ASSERT_TRUE(t.curves[0].shifted.has_value());
  EXPECT_NEAR(t.curves[0].shifted->alpha_t / std::sqrt(2.0), 1.0, 1e-6);
  EXPECT_NEAR(t.curves[0].shifted->beta_t / 0.5, 1.0, 1e-6);
  EXPECT_NEAR(t.curves[0].shifted->gamma / 0.05, 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(t.curves[0].points.front().x, 1.0);

  const auto smp = r::fit_records(time_rows, r::FitForm::kSamples, std::nullopt, {}, r::GroupBy::kNone);
  EXPECT_DOUBLE_EQ(smp.curves[0].points.front().x, 500.0);
  const auto cmp = r::fit_records(rows, r::FitForm::kCompute, std::nullopt, {}, r::GroupBy::kNone);
  double min_gflops = rows[0].gflops;
  for (const auto& rec : rows) min_gflops = std::min(min_gflops, rec.gflops);
  EXPECT_DOUBLE_EQ(cmp.curves[0].points.front().x, min_gflops);
}

TEST(FitRecords, ZeroGapsAreSkippedAndCounted) {
  const auto t13 = r::read_eval_csv(std::filesystem::path(NCO_TEST_FIXTURE_DIR) / "table13.csv");
  const auto rep = r::fit_records(t13, r::FitForm::kCompute, std::nullopt, {}, r::GroupBy::kDepth);
  EXPECT_EQ(rep.skipped_nonpositive, 4);
  std::size_t used = 0;
  for (const auto& c : rep.curves) used += c.points.size();
  EXPECT_EQ(used, 80u);
  EXPECT_EQ(r::to_json(rep)["skipped_nonpositive"], 4);
}

TEST(FitRecords, JsonKeys) {
  const auto rows = table9_records();
  const auto n = r::to_json(r::fit_records(rows, r::FitForm::kParams, std::nullopt, {}, r::GroupBy::kWidth));
  EXPECT_EQ(n["form"], "N");
  EXPECT_EQ(n["method"], "gap");
  EXPECT_FALSE(n.contains("param_constant_c"));
  ASSERT_EQ(n["curves"].size(), 3u);
  for (const char* key : {"label", "alpha", "x_c", "r2", "mape", "n_points", "points"})
    EXPECT_TRUE(n["curves"][0].contains(key)) << key;
  EXPECT_EQ(n["curves"][0]["points"][0].size(), 2u);

  const auto na = r::to_json(r::fit_records(rows, r::FitForm::kParamsRatio, std::nullopt, {}, r::GroupBy::kNone));
  EXPECT_TRUE(na.contains("param_constant_c"));
  for (const char* key : {"beta_n", "beta_a", "n_c", "a_c", "r2", "mape"})
    EXPECT_TRUE(na["curves"][0].contains(key)) << key;
  EXPECT_EQ(na["curves"][0]["points"][0].size(), 3u);

  const auto dw = r::to_json(r::fit_records(rows, r::FitForm::kDepthWidth, std::nullopt, {}, r::GroupBy::kNone));
  for (const char* key : {"beta_d", "beta_w", "d_c", "w_c"}) EXPECT_TRUE(dw["curves"][0].contains(key)) << key;

  const auto t = r::to_json(r::fit_records(rows, r::FitForm::kTime, std::nullopt, {}, r::GroupBy::kNone));
  EXPECT_EQ(t["form"], "time");
  for (const char* key : {"alpha_t", "beta_t", "gamma", "converged"})
    EXPECT_TRUE(t["curves"][0].contains(key)) << key;
}

TEST(Fixtures, EnvironmentOverride) {
  ::unsetenv("NCO_FIXTURE_DIR");
  EXPECT_EQ(r::fixture_dir("/a"), std::filesystem::path("/a"));
  ::setenv("NCO_FIXTURE_DIR", "/b", 1);
  EXPECT_EQ(r::fixture_dir("/a"), std::filesystem::path("/b"));
  ::unsetenv("NCO_FIXTURE_DIR");
}

TEST(Fixtures, TablesLoad) {
  const std::filesystem::path dir(NCO_TEST_FIXTURE_DIR);
  EXPECT_EQ(r::load_table1(dir).size(), 12u);
  EXPECT_EQ(r::load_table9(dir).size(), 12u);
  EXPECT_EQ(r::load_table12(dir).size(), 2u);
  EXPECT_EQ(r::load_table13(dir).size(), 84u);
  EXPECT_THROW(r::load_table1("/nonexistent"), nco::ValidationError);
}
