#include <gtest/gtest.h>

#include "support.hpp"

using namespace photomask;
using namespace testing_support;

namespace {

MaskMap all_of(const DepthMap& d) { return MaskMap(d.width(), d.height(), 1); }

DepthMap scaled(const DepthMap& d, double s) {
  DepthMap out = d;
  for (auto& v : out.values.values()) v *= s;
  return out;
}

void expect_same(const MetricsReport& a, const MetricsReport& b, double tol) {
  EXPECT_NEAR(a.abs_rel, b.abs_rel, tol);
  EXPECT_NEAR(a.sq_rel, b.sq_rel, tol);
  EXPECT_NEAR(a.rmse, b.rmse, tol);
  EXPECT_NEAR(a.rmse_log, b.rmse_log, tol);
  EXPECT_NEAR(a.delta1, b.delta1, tol);
  EXPECT_NEAR(a.delta2, b.delta2, tol);
  EXPECT_NEAR(a.delta3, b.delta3, tol);
  EXPECT_EQ(a.pixel_count, b.pixel_count);
}

}  // namespace

TEST(DepthMetrics, PerfectPrediction) {
  std::mt19937_64 rng(1);
  const DepthMap gt = random_depth(rng, 10, 8, 1.0, 30.0);
  const MetricsReport m = depth_metrics(gt, gt, all_of(gt));
  EXPECT_EQ(m.abs_rel, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.rmse_log, 0.0);
  EXPECT_EQ(m.delta1, 1.0);
  EXPECT_EQ(m.pixel_count, 80u);
}

TEST(DepthMetrics, HalfScalePredictionIsRecoveredByMedianScaling) {
  std::mt19937_64 rng(2);
  const DepthMap gt = random_depth(rng, 9, 7, 1.0, 30.0);
  const MetricsReport m = depth_metrics(scaled(gt, 0.5), gt, all_of(gt));
  EXPECT_NEAR(m.scale, 2.0, 1e-12);
  EXPECT_NEAR(m.abs_rel, 0.0, 1e-12);
  EXPECT_NEAR(m.rmse, 0.0, 1e-12);
  EXPECT_EQ(m.delta1, 1.0);
}

TEST(DepthMetrics, UnscaledOverestimate) {
  std::mt19937_64 rng(3);
  const DepthMap gt = random_depth(rng, 9, 7, 1.0, 30.0);
  DepthEvalConfig cfg;
  cfg.median_scaling = false;
  const MetricsReport m = depth_metrics(scaled(gt, 1.2), gt, all_of(gt), cfg);
  EXPECT_NEAR(m.abs_rel, 0.2, 1e-12);
  EXPECT_EQ(m.delta1, 1.0);
  EXPECT_NEAR(m.rmse_log, std::log(1.2), 1e-12);
  EXPECT_EQ(m.scale, 1.0);
}

TEST(DepthMetrics, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    DepthMap gt = random_depth(rng, 8, 8, 0.5, 90.0);  // some beyond the cap
    gt.valid(uniform(rng, 0, 8), uniform(rng, 0, 8)) = 0;
    const DepthMap pred = random_depth(rng, 8, 8, 0.01, 100.0);
    const bool scaling = t % 2 == 0;
    DepthEvalConfig cfg;
    cfg.median_scaling = scaling;
    const MetricsReport m = depth_metrics(pred, gt, all_of(gt), cfg);
    const oracle::Metrics o = oracle::depth_metrics(pred, gt, scaling);
    EXPECT_NEAR(m.abs_rel, o.abs_rel, 1e-12);
    EXPECT_NEAR(m.sq_rel, o.sq_rel, 1e-12);
    EXPECT_NEAR(m.rmse, o.rmse, 1e-12);
    EXPECT_NEAR(m.rmse_log, o.rmse_log, 1e-12);
    EXPECT_NEAR(m.delta1, o.d1, 1e-12);
    EXPECT_NEAR(m.delta2, o.d2, 1e-12);
    EXPECT_NEAR(m.delta3, o.d3, 1e-12);
    EXPECT_EQ(m.pixel_count, o.n);
  }
}

TEST(DepthMetrics, MedianScalingIsInvariantToPredictionScale) {
  std::mt19937_64 rng(5);
  const DepthMap gt = random_depth(rng, 12, 9, 1.0, 40.0);
  const DepthMap pred = random_depth(rng, 12, 9, 1.0, 40.0);
  const MetricsReport base = depth_metrics(pred, gt, all_of(gt));
  for (double s : {0.1, 3.0, 42.0}) expect_same(depth_metrics(scaled(pred, s), gt, all_of(gt)), base, 1e-12);
}

TEST(DepthMetrics, DeltaThresholdsAreNested) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const DepthMap gt = random_depth(rng, 8, 8, 1.0, 20.0), pred = random_depth(rng, 8, 8, 1.0, 20.0);
    const MetricsReport m = depth_metrics(pred, gt, all_of(gt));
    EXPECT_LE(m.delta1, m.delta2);
    EXPECT_LE(m.delta2, m.delta3);
    EXPECT_GE(m.delta1, 0.0);
    EXPECT_LE(m.delta3, 1.0);
  }
}

TEST(DepthMetrics, RmseLogSymmetricAbsRelNot) {
  std::mt19937_64 rng(7);
  const DepthMap a = random_depth(rng, 8, 6, 1.0, 20.0), b = random_depth(rng, 8, 6, 1.0, 20.0);
  DepthEvalConfig cfg;
  cfg.median_scaling = false;
  const MetricsReport ab = depth_metrics(a, b, all_of(a), cfg), ba = depth_metrics(b, a, all_of(a), cfg);
  EXPECT_NEAR(ab.rmse_log, ba.rmse_log, 1e-12);
  EXPECT_NEAR(ab.rmse, ba.rmse, 1e-12);
  EXPECT_GT(std::abs(ab.abs_rel - ba.abs_rel), 1e-6);
}

TEST(DepthMetrics, EmptySelectionThrows) {
  const DepthMap gt(4, 4, 5.0, true);
  try {
    depth_metrics(gt, gt, MaskMap(4, 4, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_region);
  }
  const DepthMap far(4, 4, 200.0, true);  // all beyond the cap
  EXPECT_THROW(depth_metrics(far, far, all_of(far)), Error);
}

TEST(DepthMetrics, CropRestrictsSelection) {
  std::mt19937_64 rng(8);
  const DepthMap gt = random_depth(rng, 10, 10, 1.0, 20.0);
  DepthEvalConfig cfg;
  cfg.crop = CropFractions{0.5, 1.0, 0.0, 0.5};
  EXPECT_EQ(depth_metrics(gt, gt, all_of(gt), cfg).pixel_count, 25u);
}

TEST(RegionMetrics, HandExample) {
  // Background perfect, the moving label off by 50 %: pooled abs_rel is 0.25.
  RegionSample s{DepthMap(4, 1, 1.0, true), DepthMap(4, 1, 1.0, true), LabelMap(4, 1, 0)};
  s.pred.values(2, 0) = s.pred.values(3, 0) = 1.5;
  s.labels(2, 0) = s.labels(3, 0) = static_cast<std::uint8_t>(MotionLabel::contra_dir);
  const RegionReport rep = region_metrics({s});
  const RegionEntry* bg = rep.find(0);
  const RegionEntry* contra = rep.find(static_cast<int>(MotionLabel::contra_dir));
  ASSERT_TRUE(bg && bg->metrics && contra && contra->metrics);
  EXPECT_EQ(bg->metrics->abs_rel, 0.0);
  EXPECT_NEAR(contra->metrics->abs_rel, 0.5, 1e-15);
  EXPECT_NEAR(bg->percent, 50.0, 1e-12);
  EXPECT_NEAR(contra->percent, 50.0, 1e-12);
  const MetricsReport pooled = pixel_weighted_mean({*bg->metrics, *contra->metrics});
  EXPECT_NEAR(pooled.abs_rel, 0.25, 1e-15);
  EXPECT_EQ(pooled.pixel_count, 4u);
  // Labels that never occur are reported without metrics.
  const RegionEntry* co = rep.find(static_cast<int>(MotionLabel::co_dir));
  ASSERT_NE(co, nullptr);
  EXPECT_FALSE(co->metrics.has_value());
  EXPECT_FALSE(rep.notes.empty());
}

TEST(RegionMetrics, SingleRegionEqualsGlobal) {
  std::mt19937_64 rng(9);
  const DepthMap gt = random_depth(rng, 12, 8, 1.0, 30.0), pred = random_depth(rng, 12, 8, 1.0, 30.0);
  const RegionReport rep = region_metrics({{pred, gt, LabelMap(12, 8, 0)}});
  ASSERT_TRUE(rep.find(0)->metrics);
  expect_same(*rep.find(0)->metrics, depth_metrics(pred, gt, all_of(gt)), 1e-15);
  EXPECT_EQ(rep.find(0)->percent, 100.0);
}

TEST(RegionMetrics, LabelInOneOfTwoSamples) {
  std::mt19937_64 rng(10);
  RegionSample a{random_depth(rng, 8, 8, 1.0, 20.0), random_depth(rng, 8, 8, 1.0, 20.0), LabelMap(8, 8, 0)};
  RegionSample b{random_depth(rng, 8, 8, 1.0, 20.0), random_depth(rng, 8, 8, 1.0, 20.0), LabelMap(8, 8, 0)};
  const int moving = static_cast<int>(MotionLabel::static_object);
  MaskMap in_a(8, 8, 0), bg_a(8, 8, 1);
  for (int y = 2; y < 5; ++y)
    for (int x = 1; x < 6; ++x) {
      a.labels(x, y) = static_cast<std::uint8_t>(moving);
      in_a(x, y) = 1;
      bg_a(x, y) = 0;
    }
  const RegionReport rep = region_metrics({a, b});
  const RegionEntry* e = rep.find(moving);
  ASSERT_TRUE(e && e->metrics);
  expect_same(*e->metrics, depth_metrics(a.pred, a.gt, in_a, {}, &bg_a), 1e-15);
  double total = 0;
  for (const auto& r : rep.regions) total += r.percent;
  EXPECT_NEAR(total, 100.0, 1e-9);
  EXPECT_EQ(rep.find(0)->pixel_count, 64u + 64u - 15u);
}

TEST(RegionMetrics, PercentagesSumToHundredOnRenderedScene) {
  const RenderedSample s = render(preset("mixed"));
  const DepthMap& gt = s.gt_depth[s.target_index];
  const RegionReport rep = region_metrics({{scaled(gt, 1.1), gt, s.motion_labels}});
  double total = 0;
  for (const auto& r : rep.regions) {
    total += r.percent;
    ASSERT_TRUE(r.metrics) << r.name;
    EXPECT_NEAR(r.metrics->abs_rel, 0.0, 1e-12) << r.name;
  }
  EXPECT_NEAR(total, 100.0, 1e-9);
}

namespace {

std::vector<Pose> random_trajectory(std::mt19937_64& rng, int n) {
  std::vector<Pose> traj{Pose::identity()};
  for (int i = 1; i < n; ++i) traj.push_back(compose(traj.back(), random_pose(rng, 0.05, 0.5)));
  return traj;
}

}  // namespace

TEST(Ate, IdenticalAndScaledTrajectoriesScoreZero) {
  std::mt19937_64 rng(11);
  const auto gt = random_trajectory(rng, 9);
  EXPECT_NEAR(ate_snippets(gt, gt).mean, 0.0, 1e-12);
  auto doubled = gt;
  for (auto& p : doubled) p.translation *= 2.0;
  const AteResult r = ate_snippets(doubled, gt);
  EXPECT_NEAR(r.mean, 0.0, 1e-12);
  EXPECT_NEAR(r.stddev, 0.0, 1e-12);
  EXPECT_EQ(r.per_snippet.size(), 5u);
}

TEST(Ate, FixedOffsetStaysBelowOffset) {
  std::mt19937_64 rng(12);
  std::vector<Pose> gt(5, Pose::identity());
  for (int i = 1; i < 5; ++i) gt[i].translation = Eigen::Vector3d(0.1 * i, 0.02 * i, 1.0 * i);
  auto pred = gt;
  for (int i = 1; i < 5; ++i) pred[i].translation += Eigen::Vector3d(0.05, 0.0, 0.0);
  const AteResult r = ate_snippets(pred, gt);
  EXPECT_LT(r.mean, 0.05);
  EXPECT_GT(r.mean, 0.0);
  EXPECT_NEAR(r.mean, oracle::ate(pred, gt, 5).first, 1e-12);
}

TEST(Ate, MatchesOracleOnRandomTrajectories) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const int n = 5 + t % 6;
    const auto gt = random_trajectory(rng, n), pred = random_trajectory(rng, n);
    const AteResult r = ate_snippets(pred, gt);
    const auto [mean, sd] = oracle::ate(pred, gt, 5);
    EXPECT_NEAR(r.mean, mean, 1e-12);
    EXPECT_NEAR(r.stddev, sd, 1e-12);
  }
}

TEST(Ate, ShortTrajectoryThrows) {
  const std::vector<Pose> four(4, Pose::identity());
  try {
    ate_snippets(four, four);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_short);
  }
}
