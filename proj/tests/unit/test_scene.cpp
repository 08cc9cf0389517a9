#include "deskwarp/scene.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace dw;

namespace {

SyntheticScene plane_at(double z) {
  SyntheticScene s;
  Surface p;
  p.kind = SurfaceKind::rect;
  p.axis = 2;
  p.min = Vec3(-10, -10, z);
  p.max = Vec3(10, 10, z);
  s.surfaces.push_back(p);
  return s;
}

const CameraIntrinsics kK{12, 12, 8, 8, 16, 16};

}  // namespace

TEST(GenerateScene, Deterministic) {
  EXPECT_EQ(scene_to_json(generate_scene(42, 4)), scene_to_json(generate_scene(42, 4)));
}

TEST(GenerateScene, ComplexityOneIsSingleSurface) { EXPECT_EQ(generate_scene(3, 1).surfaces.size(), 1u); }

TEST(GenerateScene, DistinctTextureHashes) {
  std::set<std::uint64_t> hashes;
  for (std::uint64_t s = 0; s < 10; ++s) hashes.insert(texture_hash(generate_scene(s, 3)));
  EXPECT_EQ(hashes.size(), 10u);
}

TEST(GenerateScene, RejectsZeroComplexity) { EXPECT_THROW(generate_scene(0, 0), std::domain_error); }

TEST(GenerateScene, JsonRoundTrip) {
  const SyntheticScene s = generate_scene(9, 6);
  EXPECT_EQ(scene_to_json(scene_from_json(scene_to_json(s))), scene_to_json(s));
}

TEST(RenderGt, FrontoParallelPlaneDepth) {
  const RgbdFrame f = render_gt(plane_at(2.0), CameraPose::identity(), kK);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(f.depth.at(x, y, 0), 2.0);
}

TEST(RenderGt, FacingAwayIsBackground) {
  const CameraPose away(axis_angle(Vec3::UnitY(), std::numbers::pi), Vec3::Zero());
  const SyntheticScene s = plane_at(2.0);
  const RgbdFrame f = render_gt(s, away, kK);
  EXPECT_EQ(f.finite_depth_count(), 0u);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      EXPECT_TRUE(std::isinf(f.depth.at(x, y, 0)));
      for (int c = 0; c < 3; ++c) EXPECT_EQ(f.rgb.at(x, y, c), s.background[c]);
    }
}

TEST(RenderGt, TranslatedCameraDepth) {
  const RgbdFrame f = render_gt(plane_at(2.0), CameraPose(Quat::Identity(), Vec3(0, 0, 1)), kK);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_EQ(f.depth.at(x, y, 0), 1.0);
}

TEST(RenderGt, AnalyticPlaneDepthUnderRotation) {
  // Ray from the origin hits z = 2 at depth 2 / (R d)_z * d_z.
  const CameraPose pose(axis_angle(Vec3(1, 1, 0), 0.3), Vec3(0.1, -0.2, 0.0));
  const RgbdFrame f = render_gt(plane_at(2.0), pose, kK);
  const Mat3 r = pose.rotation_matrix();
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const Vec3 d((x + 0.5 - 8) / 12.0, (y + 0.5 - 8) / 12.0, 1.0);
      const double t = (2.0 - pose.translation.z()) / (r * d).z();
      EXPECT_NEAR(f.depth.at(x, y, 0), t, 1e-9);
    }
}

TEST(RenderGt, PoseEquivariance) {
  const SyntheticScene s = generate_scene(5, 5);
  const Vec3 offset(0.3, -0.1, 0.2);
  const CameraPose p(axis_angle(Vec3::UnitY(), 0.1), Vec3(0.1, 0.0, -0.3));
  const CameraPose tp(p.rotation, p.translation + offset);
  const RgbdFrame a = render_gt(s, p, kK);
  const RgbdFrame b = render_gt(s.translated(offset), tp, kK);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rgb.data.size(); ++i) worst = std::max(worst, std::abs(a.rgb.data[i] - b.rgb.data[i]));
  for (std::size_t i = 0; i < a.depth.data.size(); ++i) {
    if (std::isinf(a.depth.data[i])) {
      EXPECT_TRUE(std::isinf(b.depth.data[i]));
      continue;
    }
    worst = std::max(worst, std::abs(a.depth.data[i] - b.depth.data[i]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(SampleTrajectory, DollyKeepsRotation) {
  const SyntheticScene s = generate_scene(1, 3);
  const Trajectory t = sample_trajectory(s, TrajectoryKind::dolly, 8, 4);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_EQ(t[i].pose.rotation.coeffs(), t[0].pose.rotation.coeffs());
}

TEST(SampleTrajectory, OrbitConstantStep) {
  const SyntheticScene s = generate_scene(1, 3);
  TrajectoryOptions o;
  o.orbit_degrees = 360.0 / 8.0 * 7.0;
  const Trajectory t = sample_trajectory(s, TrajectoryKind::orbit, 8, 2, o);
  const double first = rotation_angle(t[0].pose.rotation, t[1].pose.rotation);
  for (std::size_t i = 2; i < t.size(); ++i)
    EXPECT_NEAR(rotation_angle(t[i - 1].pose.rotation, t[i].pose.rotation), first, 1e-9);
  EXPECT_NEAR(first, 2.0 * std::numbers::pi / 8.0, 1e-9);
}

TEST(SampleTrajectory, Deterministic) {
  const SyntheticScene s = generate_scene(1, 3);
  for (auto kind : {TrajectoryKind::dolly, TrajectoryKind::orbit, TrajectoryKind::lateral, TrajectoryKind::mixed})
    EXPECT_EQ(trajectory_to_json(sample_trajectory(s, kind, 6, 13)), trajectory_to_json(sample_trajectory(s, kind, 6, 13)));
}

TEST(SampleTrajectory, RejectsShortLength) {
  EXPECT_THROW(sample_trajectory(generate_scene(1, 3), TrajectoryKind::dolly, 1, 0), std::domain_error);
}

TEST(Frames, SaveLoadRoundTrip) {
  const SyntheticScene s = generate_scene(2, 4);
  const RgbdFrame f = render_gt(s, CameraPose(Quat::Identity(), Vec3(0, 0, -0.3)), kK);
  const std::string prefix = ::testing::TempDir() + "/frame_rt";
  save_frame(prefix, f);
  const RgbdFrame g = load_frame(prefix);
  EXPECT_EQ(g.intrinsics, f.intrinsics);
  ASSERT_EQ(g.depth.data.size(), f.depth.data.size());
  for (std::size_t i = 0; i < f.depth.data.size(); ++i) {
    if (std::isinf(f.depth.data[i])) EXPECT_TRUE(std::isinf(g.depth.data[i]));
    else EXPECT_NEAR(g.depth.data[i], f.depth.data[i], 1e-6 * f.depth.data[i]);
  }
}
