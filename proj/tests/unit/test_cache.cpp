#include "oracles.hpp"
#include "deskwarp/cache.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/warp.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dw;

namespace {

const CameraIntrinsics kK8{8, 8, 4, 4, 8, 8};

SplatCloud three_splats() {
  SplatCloud c;
  c.positions = {Vec3(0.05, -0.1, 2.0), Vec3(-0.3, 0.2, 2.5), Vec3(0.2, 0.25, 1.6)};
  c.log_radii = {std::log(0.25), std::log(0.4), std::log(0.2)};
  c.color_logits = {Vec3(0.3, -0.5, 1.0), Vec3(-1.0, 0.4, 0.2), Vec3(0.8, 0.9, -0.6)};
  c.logit_opacities = {0.4, 1.2, -0.3};
  return c;
}

RgbdFrame target_view(const CameraPose& pose, std::uint64_t seed) {
  RgbdFrame f;
  f.pose = pose;
  f.intrinsics = kK8;
  f.rgb = Image(8, 8, 3);
  f.depth = Image(8, 8, 1, 2.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : f.rgb.data) v = u(rng);
  return f;
}

double fd_relative_error(const SplatCloud& base, const std::vector<RgbdFrame>& views, double cutoff) {
  const PhotometricLoss an = photometric_loss(base, views, cutoff, true);
  SplatCloud c = base;
  const double h = 1e-4;
  double diff = 0.0, na = 0.0, nn = 0.0;
  auto check = [&](double& param, double analytic) {
    const double num = oracle::central_difference(
        [&] { return photometric_loss(c, views, cutoff, false).value; }, param, h);
    diff += (num - analytic) * (num - analytic);
    na += analytic * analytic;
    nn += num * num;
  };
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int a = 0; a < 3; ++a) check(c.positions[i][a], an.grad.positions[i][a]);
    check(c.log_radii[i], an.grad.log_radii[i]);
    for (int a = 0; a < 3; ++a) check(c.color_logits[i][a], an.grad.color_logits[i][a]);
    check(c.logit_opacities[i], an.grad.logit_opacities[i]);
  }
  return std::sqrt(diff) / std::max(std::sqrt(std::max(na, nn)), 1e-12);
}

RgbdFrame plane_frame(const CameraPose& pose, const CameraIntrinsics& k) {
  SyntheticScene s;
  Surface p;
  p.min = Vec3(-3, -3, 2);
  p.max = Vec3(3, 3, 2);
  p.base_color = Vec3(0.8, 0.3, 0.2);
  p.accent_color = Vec3(0.2, 0.6, 0.9);
  s.surfaces.push_back(p);
  return render_gt(s, pose, k);
}

}  // namespace

TEST(InitCache, CountsAndPositions) {
  const CameraIntrinsics k{8, 8, 4, 4, 8, 8};
  const RgbdFrame f = plane_frame(CameraPose::identity(), k);
  CacheConfig cfg;
  const SplatCloud one = init_cache({f}, cfg);
  EXPECT_EQ(one.size(), 64u);
  EXPECT_EQ(init_cache({f, f}, cfg).size(), 128u);
  const RgbPointCloud pc = lift(f);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_LT((one.positions[i] - pc.positions[i]).norm(), 1e-12);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_NEAR(one.radius(i), 0.7 * 2.0 / 8.0, 1e-12);
}

TEST(RenderSplats, SingleOpaqueSplat) {
  SplatCloud c;
  // Center on pixel (4, 4), whose center is (4.5, 4.5).
  c.positions = {unproject({4.5, 4.5}, 2.0, kK8)};
  c.log_radii = {std::log(0.01)};
  c.color_logits = {Vec3(logit(0.2), logit(0.7), logit(0.4))};
  c.logit_opacities = {30.0};
  const SplatRender r = render_splats(c, CameraPose::identity(), kK8);
  EXPECT_NEAR(r.rgb.at(4, 4, 0), 0.2, 1e-6);
  EXPECT_NEAR(r.rgb.at(4, 4, 1), 0.7, 1e-6);
  EXPECT_NEAR(r.rgb.at(4, 4, 2), 0.4, 1e-6);
  EXPECT_GE(r.alpha.at(4, 4, 0), 0.99);
}

TEST(RenderSplats, ZeroOpacityIsBlack) {
  SplatCloud c = three_splats();
  for (double& o : c.logit_opacities) o = -1e3;
  const SplatRender r = render_splats(c, CameraPose::identity(), kK8);
  for (double v : r.rgb.data) EXPECT_EQ(v, 0.0);
  for (double v : r.alpha.data) EXPECT_EQ(v, 0.0);
}

TEST(RenderSplats, TwoSplatCompositingOracle) {
  SplatCloud c;
  const Vec3 near_p = unproject({4.5, 4.5}, 1.0, kK8), far_p = unproject({4.0, 4.2}, 3.0, kK8);
  c.positions = {far_p, near_p};
  c.log_radii = {std::log(0.3), std::log(0.01)};
  c.color_logits = {Vec3(logit(0.9), logit(0.1), logit(0.3)), Vec3(logit(0.2), logit(0.6), logit(0.5))};
  c.logit_opacities = {logit(0.8), 0.0};
  const SplatRender r = render_splats(c, CameraPose::identity(), kK8, 0.0);
  // Far splat weight at pixel (4, 4): opacity * exp(-d^2 / (2 s^2)) with s = r f / z.
  const double s = 0.3 * 8.0 / 3.0;
  const double dx = 4.5 - 4.0, dy = 4.5 - 4.2;
  const double w_far = 0.8 * std::exp(-(dx * dx + dy * dy) / (2 * s * s));
  const Vec3 near_c(0.2, 0.6, 0.5), far_c(0.9, 0.1, 0.3);
  const Vec3 want = 0.5 * near_c + 0.5 * w_far * far_c;
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(r.rgb.at(4, 4, ch), want[ch], 1e-9);
  EXPECT_NEAR(r.alpha.at(4, 4, 0), 1.0 - 0.5 * (1.0 - w_far), 1e-9);
}

TEST(RenderSplats, AlphaBoundedAndMonotoneInOpacity) {
  const SplatCloud base = three_splats();
  Image prev_alpha;
  for (double o : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    SplatCloud c = base;
    c.logit_opacities[1] = o;
    const SplatRender r = render_splats(c, CameraPose::identity(), kK8);
    for (double a : r.alpha.data) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
    if (!prev_alpha.data.empty())
      for (std::size_t i = 0; i < r.alpha.data.size(); ++i) EXPECT_GE(r.alpha.data[i], prev_alpha.data[i] - 1e-15);
    prev_alpha = r.alpha;
  }
}

TEST(PhotometricLoss, GradientMatchesFiniteDifferences) {
  const std::vector<RgbdFrame> views = {target_view(CameraPose::identity(), 1),
                                        target_view(CameraPose(axis_angle(Vec3::UnitY(), 0.1), Vec3(0.2, 0, 0)), 2)};
  EXPECT_LT(fd_relative_error(three_splats(), views, 0.0), 1e-3);
  EXPECT_LT(fd_relative_error(three_splats(), views, 3.0), 1e-3);
}

TEST(OptimizeCache, SingleSplatFitsConstantPixel) {
  RgbdFrame view;
  view.intrinsics = {1, 1, 0.5, 0.5, 1, 1};
  view.rgb = Image(1, 1, 3);
  view.rgb.data = {0.8, 0.3, 0.55};
  view.depth = Image(1, 1, 1, 2.0);
  SplatCloud c;
  c.positions = {Vec3(0, 0, 2)};
  c.log_radii = {std::log(1.0)};
  c.color_logits = {Vec3::Zero()};
  c.logit_opacities = {2.0};
  CacheConfig cfg;
  cfg.learning_rate = 0.05;
  const CacheOptimization r = optimize_cache(c, {view}, cfg);
  const SplatRender out = render_splats(r.cloud, view.pose, view.intrinsics);
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(out.rgb.at(0, 0, ch), view.rgb.at(0, 0, ch), 1e-2);
}

TEST(OptimizeCache, ZeroStepsReturnsInput) {
  CacheConfig cfg;
  cfg.steps = 0;
  const SplatCloud c = three_splats();
  EXPECT_EQ(optimize_cache(c, {target_view(CameraPose::identity(), 3)}, cfg).cloud, c);
}

TEST(OptimizeCache, LossDecreasesOnPlane) {
  const CameraIntrinsics k{10, 10, 6, 6, 12, 12};
  const std::vector<RgbdFrame> views = {plane_frame(CameraPose::identity(), k),
                                        plane_frame(CameraPose(Quat::Identity(), Vec3(0.1, 0, 0.1)), k)};
  CacheConfig cfg;
  cfg.steps = 60;
  const CacheOptimization r = optimize_cache(init_cache(views, cfg), views, cfg);
  ASSERT_EQ(r.loss_trace.size(), 61u);
  EXPECT_LT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(OptimizeCache, Deterministic) {
  const CameraIntrinsics k{10, 10, 6, 6, 12, 12};
  const std::vector<RgbdFrame> views = {plane_frame(CameraPose::identity(), k)};
  CacheConfig cfg;
  cfg.steps = 20;
  EXPECT_EQ(optimize_cache(init_cache(views, cfg), views, cfg).cloud,
            optimize_cache(init_cache(views, cfg), views, cfg).cloud);
}

TEST(RenderPriors, MasksFollowAlpha) {
  Trajectory t;
  t.push_back({0, CameraPose::identity(), kK8});
  SplatCloud zero = three_splats();
  for (double& o : zero.logit_opacities) o = -1e3;
  EXPECT_EQ(render_priors(zero, t, 0.5).masks[0].count(), 0u);

  const RgbdFrame f = plane_frame(CameraPose::identity(), kK8);
  CacheConfig cfg;
  cfg.init_radius_px = 1.0;
  SplatCloud dense = init_cache({f}, cfg);
  for (double& o : dense.logit_opacities) o = 20.0;
  EXPECT_EQ(render_priors(dense, t, 0.5).masks[0].count(), 64u);

  const SplatCloud c = three_splats();
  const WarpedPriorChunk hi = render_priors(c, t, 0.6), lo = render_priors(c, t, 0.2);
  for (std::size_t i = 0; i < hi.masks[0].data.size(); ++i) EXPECT_LE(hi.masks[0].data[i], lo.masks[0].data[i]);
  for (std::size_t p = 0; p < 64; ++p)
    if (!hi.masks[0].data[p])
      for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(hi.warped[0].data[3 * p + ch], 0.0);
}

TEST(Splats, SaveLoadRoundTrip) {
  const std::string path = ::testing::TempDir() + "/splats.bin";
  const SplatCloud c = three_splats();
  save_splats(path, c);
  const SplatCloud back = load_splats(path);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR((back.positions[i] - c.positions[i]).norm(), 0.0, 1e-6);
    EXPECT_NEAR(back.log_radii[i], c.log_radii[i], 1e-6);
  }
}

TEST(CacheConfig, Validate) {
  CacheConfig c;
  c.steps = -1;
  EXPECT_THROW(c.validate(), std::domain_error);
  c = {};
  c.alpha_threshold = 1.5;
  EXPECT_THROW(c.validate(), std::domain_error);
}
