#include "oracles.hpp"
#include "deskwarp/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace dw;

namespace {

Image random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

Image checker(int w, int h, bool invert) {
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x + y) % 2 == 0) != invert ? 1.0 : 0.0;
  return img;
}

std::vector<Vec3> random_points(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < n; ++i) pts.emplace_back(g(rng), g(rng), g(rng));
  return pts;
}

Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Quat q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q;
}

double pose_rotation_error(const CameraPose& a, const CameraPose& b) {
  return r_dist(a.rotation_matrix(), b.rotation_matrix());
}

}  // namespace

TEST(Psnr, IdenticalIsInfinite) {
  std::mt19937_64 rng(1);
  const Image a = random_image(8, 8, rng);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Psnr, UniformOffset) {
  const Image a(8, 8, 3, 0.5);
  Image b = a;
  for (double& v : b.data) v += 10.0 / 255.0;
  EXPECT_NEAR(psnr(a, b), 28.1308, 1e-4);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, ShapeMismatchThrows) { EXPECT_THROW(psnr(Image(4, 4, 3), Image(4, 5, 3)), std::domain_error); }

TEST(Ssim, Cases) {
  std::mt19937_64 rng(2);
  const Image a = random_image(16, 16, rng), b = random_image(16, 16, rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 0.5);
  EXPECT_LT(ssim(checker(16, 16, false), checker(16, 16, true)), 0.0);
  EXPECT_THROW(ssim(Image(4, 4, 3), Image(4, 4, 3)), std::domain_error);
}

TEST(Kabsch, IdentityAndRandomMotions) {
  std::mt19937_64 rng(3);
  const auto pts = random_points(20, rng);
  const RigidTransform id = kabsch(pts, pts);
  EXPECT_LT((id.rotation - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(id.translation.norm(), 1e-9);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 r = random_rotation(rng).toRotationMatrix();
    const Vec3 t = 3.0 * random_points(1, rng)[0];
    std::vector<Vec3> dst;
    for (const auto& p : pts) dst.push_back(r * p + t);
    const RigidTransform fit = kabsch(pts, dst);
    EXPECT_LT((fit.rotation - r).norm(), 1e-9);
    EXPECT_LT((fit.translation - t).norm(), 1e-9);
  }
}

TEST(Kabsch, ReflectionGivesProperRotation) {
  std::mt19937_64 rng(4);
  const auto pts = random_points(12, rng);
  std::vector<Vec3> mirrored;
  for (const auto& p : pts) mirrored.emplace_back(-p.x(), p.y(), p.z());
  const RigidTransform fit = kabsch(pts, mirrored);
  EXPECT_NEAR(fit.rotation.determinant(), 1.0, 1e-12);
}

TEST(Kabsch, DegenerateInputs) {
  std::vector<Vec3> same(5, Vec3(1, 2, 3));
  EXPECT_THROW(kabsch(same, same), DegenerateInput);
  std::vector<Vec3> line;
  for (int i = 0; i < 5; ++i) line.emplace_back(i, 0, 0);
  EXPECT_THROW(kabsch(line, line), DegenerateInput);
  EXPECT_THROW(kabsch(line, {Vec3::Zero()}), std::domain_error);
}

TEST(RDist, QuarterTurn) {
  const Mat3 rz = axis_angle(Vec3::UnitZ(), std::numbers::pi / 2).toRotationMatrix();
  EXPECT_NEAR(r_dist(rz, Mat3::Identity()), std::numbers::pi / 2, 1e-9);
}

TEST(RDist, MatchesAxisAngle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, std::numbers::pi);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng);
    const Vec3 axis = random_points(1, rng)[0].normalized();
    const Mat3 base = random_rotation(rng).toRotationMatrix();
    const Mat3 r = axis_angle(axis, a).toRotationMatrix() * base;
    EXPECT_NEAR(r_dist(r, base), a, 1e-9);
    EXPECT_NEAR(r_dist(r, base), oracle::angle_of(r * base.transpose()), 1e-7);
  }
}

TEST(RDist, MetricProperties) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = random_rotation(rng).toRotationMatrix(), b = random_rotation(rng).toRotationMatrix(),
               c = random_rotation(rng).toRotationMatrix();
    EXPECT_NEAR(r_dist(a, a), 0.0, 1e-7);
    EXPECT_NEAR(r_dist(a, b), r_dist(b, a), 1e-12);
    EXPECT_LE(r_dist(a, c), r_dist(a, b) + r_dist(b, c) + 1e-12);
  }
}

TEST(TrajectoryError, ScaleInvariantAndZeroOnItself) {
  std::mt19937_64 rng(7);
  std::vector<CameraPose> a, scaled, moved;
  const CameraPose world(random_rotation(rng), Vec3(1, -2, 0.5));
  for (int i = 0; i < 6; ++i) {
    const CameraPose p(axis_angle(Vec3::UnitY(), 0.05 * i), Vec3(0.1 * i, 0.02 * i * i, 0.3 * i));
    a.push_back(p);
    scaled.emplace_back(p.rotation, 3.0 * p.translation);
    moved.push_back(world.compose(p));
  }
  const TrajectoryError self = trajectory_error(a, a);
  EXPECT_EQ(self.translation, 0.0);
  EXPECT_NEAR(self.rotation, 0.0, 1e-7);
  EXPECT_NEAR(trajectory_error(a, scaled).translation, 0.0, 1e-12);
  EXPECT_NEAR(trajectory_error(moved, a).translation, 0.0, 1e-12);
  EXPECT_NEAR(trajectory_error(moved, a).rotation, 0.0, 1e-7);
  EXPECT_THROW(trajectory_error(a, {a[0]}), std::domain_error);
}

TEST(RecoverPose, ExactAndPerturbed) {
  const SyntheticScene scene = generate_scene(11, 3);
  const Trajectory traj = sample_trajectory(scene, TrajectoryKind::dolly, 4, 3, TrajectoryOptions{});
  const CameraPose truth = traj[2].pose;
  const CameraIntrinsics k = traj[2].intrinsics;
  const Image img = render_gt(scene, truth, k).rgb;

  const PoseRecovery exact = recover_pose(img, scene, truth, k);
  EXPECT_TRUE(exact.converged);
  EXPECT_LT(pose_rotation_error(exact.pose, truth), 1e-3);
  EXPECT_LT((exact.pose.translation - truth.translation).norm(), 1e-3);

  const CameraPose init = truth.compose(
      CameraPose(axis_angle(Vec3(1, 1, 0).normalized(), 2.0 * std::numbers::pi / 180), Vec3(0.02, -0.01, 0.01)));
  const PoseRecovery r = recover_pose(img, scene, init, k);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(pose_rotation_error(r.pose, truth), 1e-3);
  EXPECT_LT((r.pose.translation - truth.translation).norm(), 1e-3);
}

TEST(RecoverPose, UniformImageDoesNotConverge) {
  const SyntheticScene scene = generate_scene(11, 3);
  const Trajectory traj = sample_trajectory(scene, TrajectoryKind::dolly, 2, 3, TrajectoryOptions{});
  PoseRecoveryOptions opts;
  opts.max_evaluations = 400;
  const PoseRecovery r = recover_pose(Image(32, 32, 3, 0.5), scene, traj[0].pose, traj[0].intrinsics, opts);
  EXPECT_FALSE(r.converged);
}

TEST(Ablation, RowNames) {
  const auto& names = ablation_row_names();
  ASSERT_EQ(names.size(), 7u);
  EXPECT_EQ(names.front(), "No Cache");
  EXPECT_EQ(names.back(), "Spatial-temporal-varying noise");
}

TEST(Ablation, IdenticalModelsGiveIdenticalMetrics) {
  AblationConfig cfg;
  cfg.train.scene_pool = 1;
  cfg.train.clips_per_scene = 1;
  cfg.heldout_clips = 1;
  cfg.total_frames = 8;
  cfg.pose_metrics = false;
  cfg.session.noise.steps = 4;
  const auto clips = heldout_clips(cfg, 0);
  ASSERT_EQ(clips.size(), 1u);
  EXPECT_EQ(clips[0].frames.size(), 8u);
  const DenoiserState m = init_denoiser(cfg.train.model, 0);
  const AblationMetrics a = evaluate_setup(cfg, m, NoiseVariant::spatio_temporal, CacheMode::none, clips);
  const AblationMetrics b = evaluate_setup(cfg, m.clone(), NoiseVariant::spatio_temporal, CacheMode::none, clips);
  EXPECT_EQ(a.psnr_all, b.psnr_all);
  EXPECT_EQ(a.psnr_long, b.psnr_long);
  EXPECT_TRUE(std::isfinite(a.psnr_all));
}

TEST(Ablation, SuiteSkipsMissingCheckpoints) {
  AblationConfig cfg;
  cfg.seeds = {0};
  cfg.train.scene_pool = 1;
  cfg.train.clips_per_scene = 1;
  cfg.heldout_clips = 1;
  cfg.total_frames = 8;
  cfg.pose_metrics = false;
  const AblationReport r = ablation_suite(cfg, [](NoiseVariant, std::uint64_t) { return std::nullopt; });
  ASSERT_EQ(r.rows.size(), 7u);
  for (const auto& row : r.rows) EXPECT_TRUE(row.skipped);
  EXPECT_FALSE(r.noise.majority);
  EXPECT_FALSE(r.cache.majority);
}

TEST(Ablation, ReportJsonRoundTrip) {
  AblationReport r;
  r.seeds = {0, 1};
  for (const auto& n : ablation_row_names()) {
    AblationRow row;
    row.name = n;
    row.seed = 1;
    row.metrics.psnr_all = 17.25;
    row.metrics.ssim_long = 0.5;
    r.rows.push_back(row);
  }
  r.rows[2].skipped = true;
  r.rows[2].reason = "missing";
  r.noise = {{true, false}, false};
  r.cache = {{true, true}, true};
  const AblationReport back = report_from_json(report_to_json(r));
  EXPECT_EQ(report_to_json(back), report_to_json(r));
  ASSERT_NE(back.find("No Cache", 1), nullptr);
  EXPECT_EQ(back.find("No Cache", 1)->metrics.psnr_all, 17.25);
  EXPECT_EQ(back.find("No Cache", 7), nullptr);
  const std::string csv = report_to_csv(r);
  EXPECT_NE(csv.find("No Cache"), std::string::npos);
}
