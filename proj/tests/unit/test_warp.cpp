#include "oracles.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/warp.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <numbers>

using namespace dw;

namespace {

RgbdFrame constant_frame(int w, int h, double depth, const CameraIntrinsics& k) {
  RgbdFrame f;
  f.intrinsics = k;
  f.rgb = Image(w, h, 3);
  f.depth = Image(w, h, 1, depth);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) f.rgb.at(x, y, c) = 0.01 * (x + 8 * y) + 0.1 * c;
  return f;
}

SyntheticScene plane_at(double z) {
  SyntheticScene s;
  Surface p;
  p.min = Vec3(-0.6, -0.6, z);
  p.max = Vec3(0.6, 0.6, z);
  s.surfaces.push_back(p);
  return s;
}

}  // namespace

TEST(Lift, BackgroundGivesEmptyCloud) {
  RgbdFrame f = constant_frame(4, 4, std::numeric_limits<double>::infinity(), {4, 4, 2, 2, 4, 4});
  EXPECT_TRUE(lift(f).empty());
}

TEST(Lift, PixelZeroFormula) {
  // Principal point at the corner of the image so pixel (0, 0) is centered at (0.5, 0.5).
  const CameraIntrinsics k{1, 1, 0.5, 0.5, 8, 8};
  const RgbPointCloud c = lift(constant_frame(8, 8, 2.0, k));
  EXPECT_EQ(c.positions[0], Vec3(0, 0, 2));
}

TEST(Lift, MatchesPerPixelOracle) {
  const CameraIntrinsics k{6, 5, 3.7, 4.1, 8, 8};
  RgbdFrame f = constant_frame(8, 8, 1.0, k);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.depth.at(x, y, 0) = 1.0 + 0.1 * x + 0.05 * y;
  f.pose = CameraPose(axis_angle(Vec3(0.2, 1, 0), 0.4), Vec3(0.5, -0.3, 0.2));
  const RgbPointCloud c = lift(f);
  ASSERT_EQ(c.size(), 64u);
  const Mat3 r = f.pose.rotation.toRotationMatrix();
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const Vec3 want = r * oracle::unproject(x + 0.5, y + 0.5, f.depth.at(x, y, 0), k) + f.pose.translation;
      EXPECT_LT((c.positions[y * 8 + x] - want).norm(), 1e-12);
    }
}

TEST(SplatRender, IdentityWarp) {
  const SyntheticScene s = generate_scene(4, 5);
  const CameraIntrinsics k{20, 20, 12, 12, 24, 24};
  const RgbdFrame f = render_gt(s, CameraPose(axis_angle(Vec3::UnitY(), 0.05), Vec3(0, 0, -0.3)), k);
  const WarpedView v = splat_render(lift(f), f.pose, k, 0.5);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const bool finite = std::isfinite(f.depth.at(x, y, 0));
      EXPECT_EQ(v.mask.at(x, y) != 0, finite);
      if (!v.mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(v.rgb.at(x, y, c), f.rgb.at(x, y, c), 1e-9);
    }
}

TEST(SplatRender, SinglePointProjection) {
  RgbPointCloud c;
  c.positions.push_back(Vec3(0, 0, 2));
  c.colors.push_back(Vec3(1, 0.5, 0.25));
  c.source_pixel.push_back(0);
  // Camera at (1, 0, 0): the point sits at (-1, 0, 2) in camera space, projecting to (-0.5, 0).
  const CameraIntrinsics k{1, 1, 2.5, 0.5, 4, 1};
  const WarpedView v = splat_render(c, CameraPose(Quat::Identity(), Vec3(1, 0, 0)), k, 0.5);
  // u = -0.5 + 2.5 = 2, pixel centers 1.5 and 2.5 both at distance 0.5.
  const WarpedView o = oracle::brute_force_splat(c, CameraPose(Quat::Identity(), Vec3(1, 0, 0)), k, 0.5);
  EXPECT_EQ(v.mask.data, o.mask.data);
  EXPECT_EQ(v.rgb.data, o.rgb.data);
  EXPECT_EQ(v.mask.at(1, 0), 1);
  EXPECT_EQ(v.mask.at(2, 0), 1);
  EXPECT_EQ(v.mask.at(0, 0), 0);
}

TEST(SplatRender, NearerPointWins) {
  RgbPointCloud c;
  c.positions = {Vec3(0, 0, 2), Vec3(0, 0, 1)};
  c.colors = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
  c.source_pixel = {0, 0};
  const CameraIntrinsics k{1, 1, 0.5, 0.5, 1, 1};
  const WarpedView v = splat_render(c, CameraPose::identity(), k, 0.5);
  EXPECT_EQ(v.rgb.at(0, 0, 1), 1.0);
  EXPECT_EQ(v.rgb.at(0, 0, 0), 0.0);
}

TEST(SplatRender, MaskZeroMeansBlack) {
  const SyntheticScene s = generate_scene(8, 6);
  const CameraIntrinsics k{14, 14, 8, 8, 16, 16};
  const RgbdFrame f = render_gt(s, CameraPose(Quat::Identity(), Vec3(0, 0, -0.4)), k);
  const WarpedView v = splat_render(lift(f), CameraPose(axis_angle(Vec3::UnitY(), 0.3), Vec3(0.3, 0, -0.2)), k, 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (!v.mask.at(x, y))
        for (int c = 0; c < 3; ++c) EXPECT_EQ(v.rgb.at(x, y, c), 0.0);
}

TEST(SplatRender, BruteForceOracleOn100Scenes) {
  const CameraIntrinsics k{14, 14, 8, 8, 16, 16};
  int identical = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SyntheticScene s = generate_scene(seed, 2 + static_cast<int>(seed % 6));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const CameraPose src(axis_angle(Vec3(u(rng), 1, u(rng)), 0.2 * u(rng)), Vec3(0.2 * u(rng), 0.1 * u(rng), -0.4));
    const CameraPose dst(axis_angle(Vec3(u(rng), 1, u(rng)), 0.2 * u(rng)),
                         src.translation + Vec3(0.2 * u(rng), 0.1 * u(rng), 0.3 * u(rng)));
    const RgbPointCloud cloud = lift(render_gt(s, src, k));
    const WarpedView v = splat_render(cloud, dst, k, 0.5);
    const WarpedView o = oracle::brute_force_splat(cloud, dst, k, 0.5);
    identical += (v.mask.data == o.mask.data && v.rgb.data == o.rgb.data) ? 1 : 0;
  }
  EXPECT_EQ(identical, 100);
}

TEST(SplatRender, OcclusionOfParallelPlanes) {
  SyntheticScene s = plane_at(3.0);
  Surface near = s.surfaces[0];
  near.min = Vec3(-0.2, -0.2, 1.5);
  near.max = Vec3(0.2, 0.2, 1.5);
  near.base_color = near.accent_color = Vec3(1, 0, 0);
  near.texture_seed = 77;
  s.surfaces.push_back(near);
  const CameraIntrinsics k{12, 12, 8, 8, 16, 16};
  const RgbdFrame a = render_gt(plane_at(3.0), CameraPose::identity(), k);
  SyntheticScene only_near;
  only_near.surfaces.push_back(near);
  const RgbdFrame b = render_gt(only_near, CameraPose::identity(), k);
  RgbPointCloud cloud = lift(a);
  cloud.append(lift(b));
  const WarpedView v = splat_render(cloud, CameraPose(Quat::Identity(), Vec3(0.05, 0, 0)), k, 1.0);
  const WarpedView o = oracle::brute_force_splat(cloud, CameraPose(Quat::Identity(), Vec3(0.05, 0, 0)), k, 1.0);
  EXPECT_EQ(v.rgb.data, o.rgb.data);
  // Center pixel is covered by both planes; the near plane's colors win.
  const Vec3 center(v.rgb.at(8, 8, 0), v.rgb.at(8, 8, 1), v.rgb.at(8, 8, 2));
  bool from_near = false;
  for (std::size_t i = lift(a).size(); i < cloud.size(); ++i) from_near = from_near || cloud.colors[i] == center;
  EXPECT_TRUE(from_near);
}

TEST(SplatRender, RejectsTinyRadius) {
  EXPECT_THROW(splat_render({}, CameraPose::identity(), {1, 1, 0.5, 0.5, 1, 1}, 0.4), std::domain_error);
}

TEST(OneToAll, SourcePoseIsIdentityWarp) {
  const SyntheticScene s = generate_scene(2, 4);
  const CameraIntrinsics k{14, 14, 8, 8, 16, 16};
  const RgbdFrame f = render_gt(s, CameraPose(Quat::Identity(), Vec3(0, 0, -0.3)), k);
  Trajectory t;
  t.push_back({0, f.pose, k});
  const WarpedPriorChunk c = one_to_all(f, t, 0.5);
  ASSERT_EQ(c.size(), 1u);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (c.masks[0].at(x, y))
        for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(c.warped[0].at(x, y, ch), f.rgb.at(x, y, ch), 1e-9);
}

TEST(OneToAll, FacingAwayGivesEmptyMasks) {
  const SyntheticScene s = plane_at(2.0);
  const CameraIntrinsics k{8, 8, 4, 4, 8, 8};
  const RgbdFrame f = render_gt(s, CameraPose::identity(), k);
  Trajectory t;
  t.push_back({0, CameraPose(axis_angle(Vec3::UnitY(), std::numbers::pi), Vec3::Zero()), k});
  EXPECT_EQ(one_to_all(f, t).masks[0].count(), 0u);
}

TEST(OneToAll, DollyCoverageNonIncreasing) {
  const SyntheticScene s = plane_at(2.0);
  const CameraIntrinsics k{10, 10, 8, 8, 16, 16};
  const RgbdFrame f = render_gt(s, CameraPose::identity(), k);
  Trajectory t;
  for (int i = 0; i < 4; ++i) t.push_back({i, CameraPose(Quat::Identity(), Vec3(0, 0, -0.4 * i)), k});
  const WarpedPriorChunk c = one_to_all(f, t, 1.0);
  for (int i = 1; i < 4; ++i) EXPECT_LE(c.masks[i].count(), c.masks[i - 1].count());
}

TEST(DownsampleMask, Examples) {
  EXPECT_EQ(downsample_mask(Mask(8, 8, 1), 4).data, std::vector<std::uint8_t>(4, 1));
  EXPECT_EQ(downsample_mask(Mask(8, 8, 0), 4).data, std::vector<std::uint8_t>(4, 0));
  Mask half(4, 4);
  for (int i = 0; i < 8; ++i) half.data[i] = 1;
  EXPECT_EQ(downsample_mask(half, 4).data, std::vector<std::uint8_t>{1});
  Mask seven(4, 4);
  for (int i = 0; i < 7; ++i) seven.data[i] = 1;
  EXPECT_EQ(downsample_mask(seven, 4).data, std::vector<std::uint8_t>{0});
  EXPECT_THROW(downsample_mask(Mask(6, 6), 4), std::domain_error);
}
