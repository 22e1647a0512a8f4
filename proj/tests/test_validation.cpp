#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vlslice/validation.hpp"

namespace {

using namespace vlslice;

TEST(Validation, PerfectLine) {
  const std::vector<double> x{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<double> y;
  for (double v : x) y.push_back(0.1 + 0.5 * v);
  const auto fit = fit_line(x, y);
  ASSERT_TRUE(fit.defined);
  EXPECT_NEAR(fit.slope, 0.5, 1e-12);
  EXPECT_NEAR(fit.intercept, 0.1, 1e-12);
  EXPECT_NEAR(fit.r, 1.0, 1e-12);
}

TEST(Validation, IndependentNoiseHasSmallCorrelation) {
  Rng rng(17);
  std::vector<double> x(1000);
  std::vector<double> y(1000);
  for (auto& v : x) v = standard_normal(rng);
  for (auto& v : y) v = standard_normal(rng);
  EXPECT_LT(std::abs(fit_line(x, y).r), 0.1);
}

TEST(Validation, ConstantSimilarityIsDegenerate) {
  const std::vector<double> x(5, 0.3);
  const std::vector<double> y{1, 2, 3, 4, 5};
  EXPECT_FALSE(fit_line(x, y).defined);
  const std::vector<double> flat{0.5, 0.5, 0.5, 0.5, 0.5};
  const std::vector<double> xs{1, 2, 3, 4, 5};
  const auto fit = fit_line(xs, flat);
  EXPECT_TRUE(fit.defined);
  EXPECT_EQ(fit.slope, 0.0);
  EXPECT_EQ(fit.r, 0.0);
}

struct Scene {
  EmbeddingMatrix m;
  WorkingSet ws;
  AffinityProfile profile;
};

// Images along a circle arc in the (x, y) plane; delta_c linear in the
// cosine to (1, 0) except for one planted outlier.
Scene arc_scene(std::size_t n, std::size_t outlier) {
  std::vector<std::vector<float>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 1.5 * static_cast<double>(i) / static_cast<double>(n - 1);
    rows.push_back({static_cast<float>(std::cos(t)), static_cast<float>(std::sin(t))});
  }
  Scene s{fixtures::make_matrix(rows), {}, {}};
  s.ws = fixtures::whole_working_set(s.m);
  s.profile.image_ids = s.ws.image_ids;
  for (std::size_t i = 0; i < n; ++i) {
    const double sim = s.m.row(i)[0];
    s.profile.delta_c.push_back(0.4 * sim - 0.1 + (i == outlier ? 0.5 : 0.0));
  }
  return s;
}

TEST(Validation, ReportAndOutliers) {
  auto scene = arc_scene(60, 37);
  SliceContext ctx(scene.m, scene.ws, scene.profile);
  const std::vector<std::string> seed{"img_00000"};
  const auto slice = create_slice(ctx, "sl1", "x", seed);
  const auto report = correlation_report(slice, scene.ws, scene.profile, scene.m);
  EXPECT_EQ(report.n, 60u);
  EXPECT_EQ(report.points.size(), 60u);
  EXPECT_TRUE(report.points[0].in_slice);
  EXPECT_FALSE(report.points[1].in_slice);
  EXPECT_GT(report.slope, 0.0);
  EXPECT_GT(report.pearson_r, 0.8);

  const auto top = outlier_candidates(report, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0], "img_00037");
  EXPECT_EQ(outlier_candidates(report, 1000).size(), 60u);
  EXPECT_THROW(outlier_candidates(report, 0), Error);
}

TEST(Validation, EmptySliceAndDegenerateFit) {
  auto scene = arc_scene(5, 99);
  SliceContext ctx(scene.m, scene.ws, scene.profile);
  const auto empty = create_slice(ctx, "sl1", "x", {});
  EXPECT_THROW(correlation_report(empty, scene.ws, scene.profile, scene.m), Error);

  auto same = fixtures::make_matrix({{1, 0}, {1, 0}, {1, 0}});
  const auto ws = fixtures::whole_working_set(same);
  AffinityProfile p;
  p.image_ids = ws.image_ids;
  p.delta_c = {0.1, 0.2, 0.3};
  SliceContext ctx2(same, ws, p);
  const std::vector<std::string> seed{"img_00000"};
  const auto slice = create_slice(ctx2, "sl1", "x", seed);
  const auto report = correlation_report(slice, ws, p, same);
  EXPECT_FALSE(report.fit_defined);
  try {
    outlier_candidates(report, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conflict);
  }
}

}  // namespace
