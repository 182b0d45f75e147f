#include <gtest/gtest.h>

#include <limits>

#include "support.hpp"

using namespace photomask;
using namespace testing_support;

namespace {

ErrorMap make_error(const std::vector<double>& values, int w, int h) {
  ErrorMap e{Grid<double>(w, h, 0.0), MaskMap(w, h, 1)};
  std::copy(values.begin(), values.end(), e.values.values().begin());
  return e;
}

ErrorMap constant_error(int w, int h, double v) { return {Grid<double>(w, h, v), MaskMap(w, h, 1)}; }

ErrorMap random_error(std::mt19937_64& rng, int w, int h) {
  ErrorMap e{Grid<double>(w, h, 0.0), MaskMap(w, h, 1)};
  for (auto& v : e.values.values()) v = std::pow(uniform(rng), 3.0);
  return e;
}

MaskMap random_mask(std::mt19937_64& rng, int w, int h) {
  MaskMap m(w, h, 0);
  for (auto& v : m.values()) v = uniform(rng) < 0.6 ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> bits(const MaskMap& m) { return {m.values().begin(), m.values().end()}; }

bool subset(const MaskMap& a, const MaskMap& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

}  // namespace

TEST(ErrorStats, ConstantMap) {
  const std::vector<ErrorMap> e{constant_error(4, 3, 0.2)};
  const ErrorStats s = error_stats(e);
  EXPECT_NEAR(s.mu, 0.2, 1e-15);
  EXPECT_NEAR(s.sigma, 0.0, 1e-15);
}

TEST(ErrorStats, PooledHandExample) {
  const std::vector<ErrorMap> e{make_error({0.001, 0.001, 0.001, 0.001, 0.1}, 5, 1)};
  const ErrorStats s = error_stats(e);
  EXPECT_NEAR(s.mu, 0.0208, 1e-12);
  EXPECT_NEAR(s.sigma, 0.0396, 1e-12);
}

TEST(ErrorStats, PoolsAcrossSourcesAndSkipsInvalid) {
  std::vector<ErrorMap> e{constant_error(3, 3, 0.1), constant_error(3, 3, 0.3)};
  EXPECT_NEAR(error_stats(e).mu, 0.2, 1e-15);
  e[1].values(0, 0) = 100.0;
  e[1].valid(0, 0) = 0;
  const ErrorStats s = error_stats(e);
  EXPECT_EQ(s.count, 17u);
  EXPECT_NEAR(s.mu, (9 * 0.1 + 8 * 0.3) / 17, 1e-15);
}

TEST(ErrorStats, NoValidPixelThrows) {
  std::vector<ErrorMap> e{constant_error(2, 2, 0.1)};
  e[0].valid = MaskMap(2, 2, 0);
  try {
    error_stats(e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::empty_sample);
  }
}

TEST(OutlierMask, HandExampleBounds) {
  const ErrorMap e = make_error({0.001, 0.001, 0.001, 0.001, 0.1}, 5, 1);
  const std::vector<ErrorMap> v{e};
  const MaskMap m = outlier_mask(e, error_stats(v), {1.0, 0.5});
  EXPECT_EQ(bits(m), (std::vector<std::uint8_t>{1, 1, 1, 1, 0}));
}

TEST(OutlierMask, DegenerateSigmaKeepsEverything) {
  const ErrorMap e = constant_error(5, 4, 0.37);
  const std::vector<ErrorMap> v{e};
  EXPECT_EQ(count_true(outlier_mask(e, error_stats(v))), 20u);
}

TEST(OutlierMask, InfiniteThresholdsKeepEverything) {
  std::mt19937_64 rng(1);
  const ErrorMap e = random_error(rng, 10, 10);
  const std::vector<ErrorMap> v{e};
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(count_true(outlier_mask(e, error_stats(v), {inf, inf})), 100u);
}

TEST(OutlierMask, KeptValuesStrictlyInsideBounds) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const std::vector<ErrorMap> v{random_error(rng, 16, 12), random_error(rng, 16, 12)};
    const ErrorStats s = error_stats(v);
    const OutlierConfig cfg{uniform(rng, 0, 2), uniform(rng, 0, 2)};
    for (const auto& e : v) {
      const MaskMap m = outlier_mask(e, s, cfg);
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double x = e.values[i];
        const bool inside = x > s.mu - cfg.l * s.sigma && x < s.mu + cfg.u * s.sigma;
        EXPECT_EQ(m[i] != 0, inside);
      }
    }
  }
}

TEST(OutlierMask, MonotoneInBothThresholds) {
  std::mt19937_64 rng(3);
  const ErrorMap e = random_error(rng, 20, 20);
  const std::vector<ErrorMap> v{e};
  const ErrorStats s = error_stats(v);
  MaskMap prev = outlier_mask(e, s, {1.0, 0.25});
  for (double u : {0.5, 1.0}) {
    const MaskMap next = outlier_mask(e, s, {1.0, u});
    EXPECT_TRUE(subset(prev, next));
    prev = next;
  }
  EXPECT_TRUE(subset(outlier_mask(e, s, {0.1, 0.5}), outlier_mask(e, s, {0.8, 0.5})));
}

TEST(OutlierConfig, RejectsNegativeThresholds) {
  EXPECT_THROW((OutlierConfig{-1.0, 0.5}.validate()), Error);
  EXPECT_THROW((OutlierConfig{1.0, 0.5, 0.0}.validate()), Error);
}

TEST(AutoMask, StrictInequality) {
  const ErrorMap recon = make_error({0.1, 0.2, 0.3}, 3, 1);
  const ErrorMap direct = make_error({0.2, 0.2, 0.1}, 3, 1);
  EXPECT_EQ(bits(auto_mask(recon, direct)), (std::vector<std::uint8_t>{1, 0, 0}));
  EXPECT_EQ(count_true(auto_mask(recon, recon)), 0u);
}

TEST(AutoMask, CorrectWarpOnStaticSceneWinsOnTexturedPixels) {
  const SceneSpec spec = preset("static");
  const RenderedSample s = render(spec);
  for (std::size_t j = 0; j < s.gt_poses.size(); ++j) {
    const WarpResult w = synthesize_view(s.sources()[j], s.gt_depth[s.target_index], s.gt_poses[j], spec.intrinsics);
    const ErrorMap recon = photometric_error(s.target(), w.image);
    const ErrorMap direct = photometric_error(s.target(), s.sources()[j]);
    const MaskMap m = auto_mask(recon, direct);
    // Textured: the unwarped comparison shows a difference. Pixels whose SSIM window
    // touches the zero-filled out-of-bounds region are skipped.
    std::size_t textured = 0, kept = 0;
    const int W = spec.intrinsics.width, H = spec.intrinsics.height;
    for (int y = 1; y + 1 < H; ++y)
      for (int x = 1; x + 1 < W; ++x) {
        bool window_in = true;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) window_in = window_in && w.in_bounds(x + dx, y + dy);
        if (!window_in || s.occlusion[j](x, y) || direct.values(x, y) < 1e-4) continue;
        ++textured;
        kept += m(x, y);
      }
    ASSERT_GT(textured, 1000u);
    EXPECT_GT(static_cast<double>(kept) / textured, 0.95) << "source " << j;
  }
}

TEST(MinReprojection, Examples) {
  const std::vector<ErrorMap> two{make_error({0.3}, 1, 1), make_error({0.2}, 1, 1)};
  const auto m = min_reprojection_mask(two);
  EXPECT_EQ(m[0][0], 0);
  EXPECT_EQ(m[1][0], 1);

  std::mt19937_64 rng(4);
  const ErrorMap e = random_error(rng, 6, 6);
  const std::vector<ErrorMap> same{e, e};
  for (const auto& mask : min_reprojection_mask(same)) EXPECT_EQ(count_true(mask), 36u);
  const std::vector<ErrorMap> one{e};
  EXPECT_EQ(count_true(min_reprojection_mask(one)[0]), 36u);
}

TEST(CombineMasks, BooleanAlgebra) {
  std::mt19937_64 rng(5);
  const MaskMap all(8, 8, 1), none(8, 8, 0);
  const MaskMap a = random_mask(rng, 8, 8), b = random_mask(rng, 8, 8), c = random_mask(rng, 8, 8);
  auto comb = [](std::initializer_list<MaskMap> l) { return combine_masks(std::vector<MaskMap>(l)); };
  EXPECT_EQ(comb({all, all}), all);
  EXPECT_EQ(comb({a, none}), none);
  EXPECT_EQ(comb({a, a}), a);
  EXPECT_EQ(comb({a, b}), comb({b, a}));
  EXPECT_EQ(comb({comb({a, b}), c}), comb({a, comb({b, c})}));
  EXPECT_EQ(comb({a, b, c}), comb({c, a, b}));
}

TEST(ScaleWeights, ExactValues) {
  LossConfig cfg;
  cfg.f = 0.25;
  cfg.scales = 4;
  EXPECT_EQ(scale_weights(cfg), (std::vector<double>{1.0, 0.25, 0.0625, 0.015625}));
  cfg.f = 1.0;
  EXPECT_EQ(scale_weights(cfg), (std::vector<double>{1.0, 1.0, 1.0, 1.0}));
  cfg.f = 0.5;
  cfg.scales = 2;
  EXPECT_EQ(scale_weights(cfg), (std::vector<double>{1.0, 0.5}));
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  cfg.eta = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.f = 1.5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.e = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

namespace {

// Constant target against a constant source: the photometric error is the same
// constant c at every pixel of every scale, regardless of depth.
struct ConstantScene {
  Intrinsics k{20, 20, 7.5, 7.5, 16, 16};
  SampleBundle bundle{ImageBuffer(16, 16, 1, 0.2), {ImageBuffer(16, 16, 1, 0.5)}, k, 2};
  double c = 0.85 * (1 - (2 * 0.2 * 0.5 + 1e-4) / (0.04 + 0.25 + 1e-4)) / 2 + 0.15 * 0.3;
};

}  // namespace

TEST(TotalLoss, SingleTermConstantErrorIsThatConstant) {
  ConstantScene sc;
  LossConfig cfg;
  cfg.scales = 1;
  cfg.lambda = 0;
  const LossResult r = total_loss(sc.bundle, {InverseDepthMap(16, 16, 0.3)}, {Pose::identity()}, cfg, {},
                                  MaskFlags::none());
  EXPECT_NEAR(r.total, sc.c, 1e-12);
}

TEST(TotalLoss, TwoScalesWeightedByF) {
  ConstantScene sc;
  LossConfig cfg;
  cfg.scales = 2;
  cfg.f = 0.25;
  cfg.lambda = 0;
  const LossResult r = total_loss(sc.bundle, {InverseDepthMap(16, 16, 0.3), InverseDepthMap(8, 8, 0.3)},
                                  {Pose::identity()}, cfg, {}, MaskFlags::none());
  EXPECT_NEAR(r.total, 1.25 * sc.c, 1e-12);
}

TEST(TotalLoss, FullyMaskedTermContributesZeroWithDiagnostic) {
  const Intrinsics k{20, 20, 7.5, 7.5, 16, 16};
  std::mt19937_64 rng(6);
  const ImageBuffer img = random_image(rng, 16, 16, 1);
  const SampleBundle b(img, {img}, k, 1);
  LossConfig cfg;
  cfg.scales = 1;
  cfg.lambda = 0;
  MaskFlags flags = MaskFlags::none();
  flags.principled = true;
  // Shifting the scene by more than the image width leaves nothing in bounds.
  const LossResult r = total_loss(b, {InverseDepthMap(16, 16, 1.0)}, {Pose::from_translation({2.0, 0, 0})}, cfg, {},
                                  flags);
  EXPECT_EQ(r.total, 0.0);
  ASSERT_EQ(r.terms.size(), 1u);
  EXPECT_TRUE(r.terms[0].fully_masked);
  EXPECT_FALSE(r.diagnostics.empty());
}

TEST(TotalLoss, GroundTruthOnStaticPresetIsNearZero) {
  const SceneSpec spec = preset("static");
  const RenderedSample s = render(spec);
  const SampleBundle b(s.target(), s.sources(), spec.intrinsics, 4);
  LossConfig cfg;
  cfg.lambda = 0;
  const LossResult r = total_loss(b, inverse_depth_pyramid(s.gt_depth[s.target_index], 4), s.gt_poses, cfg);
  EXPECT_LT(r.total, 1e-4);
}

TEST(TotalLoss, UnmaskedUniformScalesMatchBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    const Intrinsics k = small_intrinsics(32, 24);
    const ImageBuffer target = smooth_image(rng, 32, 24, 3);
    const std::vector<ImageBuffer> sources{smooth_image(rng, 32, 24, 3), smooth_image(rng, 32, 24, 3)};
    const SampleBundle b(target, sources, k, 3);
    std::vector<InverseDepthMap> inv;
    for (int r = 0; r < 3; ++r) {
      InverseDepthMap d(32 >> r, 24 >> r, 0.0);
      for (auto& v : d.values()) v = uniform(rng, 0.1, 0.5);
      inv.push_back(d);
    }
    const std::vector<Pose> poses{random_pose(rng, 0.02, 0.1), random_pose(rng, 0.02, 0.1)};
    LossConfig cfg;
    cfg.f = 1.0;
    cfg.scales = 3;
    cfg.lambda = 0.01;
    const double lib = total_loss(b, inv, poses, cfg, {}, MaskFlags::none()).total;
    const double ref = oracle::unmasked_loss(target, sources, inv, poses, k, cfg.lambda, cfg.e);
    EXPECT_NEAR(lib, ref, 1e-12);
  }
}

TEST(TotalLoss, InvariantToSourcePermutation) {
  for (const char* name : {"static", "contra_dir", "mixed"}) {
    const SceneSpec spec = preset(name);
    const RenderedSample s = render(spec);
    const SampleBundle b(s.target(), s.sources(), spec.intrinsics, 4);
    const auto inv = inverse_depth_pyramid(s.gt_depth[s.target_index], 4);
    const LossConfig cfg;
    const double fwd = total_loss(b, inv, s.gt_poses, cfg).total;
    const std::vector<Pose> rev{s.gt_poses.rbegin(), s.gt_poses.rend()};
    const double bwd = total_loss(b.reordered({1, 0}), inv, rev, cfg).total;
    EXPECT_NEAR(fwd, bwd, 1e-12) << name;
  }
}

TEST(TotalLoss, ThreadCountDoesNotChangeResult) {
  const SceneSpec spec = preset("mixed");
  const RenderedSample s = render(spec);
  const SampleBundle b(s.target(), s.sources(), spec.intrinsics, 4);
  const auto inv = inverse_depth_pyramid(s.gt_depth[s.target_index], 4);
  LossConfig cfg;
  const double one = total_loss(b, inv, s.gt_poses, cfg).total;
  cfg.threads = 4;
  EXPECT_EQ(total_loss(b, inv, s.gt_poses, cfg).total, one);
}

TEST(TotalLoss, ContraObjectErrorsAreExcluded) {
  const SceneSpec spec = preset("contra_dir");
  const RenderedSample s = render(spec);
  const SampleBundle b(s.target(), s.sources(), spec.intrinsics, 4);
  const LossResult r = total_loss(b, inverse_depth_pyramid(s.gt_depth[s.target_index], 4), s.gt_poses, LossConfig{});
  const ErrorStats st = r.stats_per_scale[0];
  const double hi = st.mu + 0.5 * st.sigma;
  std::size_t high = 0, excluded = 0;
  for (std::size_t j = 0; j < r.errors[0].size(); ++j)
    for (std::size_t i = 0; i < s.motion_labels.size(); ++i) {
      if (s.motion_labels[i] != static_cast<std::uint8_t>(MotionLabel::contra_dir)) continue;
      if (!r.errors[0][j].valid[i] || r.errors[0][j].values[i] <= hi) continue;
      ++high;
      excluded += r.masks[0][j].outlier[i] ? 0 : 1;
    }
  ASSERT_GT(high, 50u);
  EXPECT_GE(static_cast<double>(excluded) / high, 0.70);
}
