#pragma once

#include "deskwarp/geometry.hpp"
#include "deskwarp/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dw {

enum class SurfaceKind { rect, box };

/// Axis-aligned rectangle (min[axis] == max[axis]) or box, with a
/// procedural texture evaluated in surface-local coordinates.
struct Surface {
  SurfaceKind kind = SurfaceKind::rect;
  int axis = 2;  // rect normal axis
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  std::uint64_t texture_seed = 0;
  Vec3 base_color = Vec3::Constant(0.5);
  Vec3 accent_color = Vec3::Constant(0.5);
  double noise_frequency = 2.0;
  double checker_size = 0.3;

  Vec3 extent() const { return max - min; }
  /// Texture lookup at local coordinates (a, b) in world units.
  Vec3 shade(double a, double b) const;
};

struct SyntheticScene {
  std::vector<Surface> surfaces;
  Vec3 background = Vec3(0.05, 0.05, 0.08);
  std::uint64_t seed = 0;

  void validate() const;
  /// Rigid translation of every surface; textures move with them.
  SyntheticScene translated(const Vec3& offset) const;
};

/// RGB in [0, 1], camera-frame z depth with +inf on background.
struct RgbdFrame {
  Image rgb;
  Image depth;
  CameraPose pose;
  CameraIntrinsics intrinsics;

  std::size_t finite_depth_count() const;
};

struct RayHit {
  double t = 0.0;
  Vec3 color = Vec3::Zero();
  bool hit = false;
};

SyntheticScene generate_scene(std::uint64_t seed, int complexity);

/// Nearest intersection along origin + t * dir with t > 0.
RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir);

RgbdFrame render_gt(const SyntheticScene& scene, const CameraPose& pose, const CameraIntrinsics& k);

enum class TrajectoryKind { dolly, orbit, lateral, mixed };

TrajectoryKind trajectory_kind_from_string(const std::string& s);
std::string to_string(TrajectoryKind kind);

struct TrajectoryOptions {
  int width = 32;
  int height = 32;
  /// Focal length as a multiple of the image width.
  double focal_scale = 0.9;
  /// Total orbit arc in degrees; 0 picks a random arc in [24, 40].
  double orbit_degrees = 0.0;
  /// Total path length for dolly / lateral / mixed; 0 picks a random length.
  double travel = 0.0;
};

CameraIntrinsics default_intrinsics(const TrajectoryOptions& opts);

Trajectory sample_trajectory(const SyntheticScene& scene, TrajectoryKind kind, int length, std::uint64_t seed,
                             const TrajectoryOptions& opts = {});

/// Fraction of pixels with finite depth.
double surface_coverage(const RgbdFrame& frame);

/// FNV-1a over the texture parameters and a grid of texture samples.
std::uint64_t texture_hash(const SyntheticScene& scene);

std::string scene_to_json(const SyntheticScene& scene);
SyntheticScene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const SyntheticScene& scene);
SyntheticScene load_scene(const std::string& path);

/// Writes `<prefix>.png`, `<prefix>.depth` (+ `.depth.json`) and `<prefix>.pose.json`.
void save_frame(const std::string& prefix, const RgbdFrame& frame);
RgbdFrame load_frame(const std::string& prefix);

}  // namespace dw
