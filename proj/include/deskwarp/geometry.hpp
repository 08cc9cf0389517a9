#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace dw {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Pinhole intrinsics. Pixel (i, j) has its center at continuous
/// coordinate (i + 0.5, j + 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws std::domain_error when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;
  /// Intrinsics of the same camera sampled on a grid `factor` times coarser.
  CameraIntrinsics downscaled(int factor) const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rigid camera-to-world transform: p_world = R * p_cam + t.
struct CameraPose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  CameraPose() = default;
  CameraPose(const Quat& q, const Vec3& t);

  static CameraPose identity() { return {}; }
  static CameraPose from_matrix(const Mat3& r, const Vec3& t);

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Vec3 center() const { return translation; }

  /// this * other, i.e. apply `other` first.
  CameraPose compose(const CameraPose& other) const;
  CameraPose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  void validate() const;
};

struct TrajectoryFrame {
  int frame = 0;
  CameraPose pose;
  CameraIntrinsics intrinsics;
};

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<TrajectoryFrame> frames);

  std::size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  const TrajectoryFrame& operator[](std::size_t i) const { return frames_[i]; }
  TrajectoryFrame& operator[](std::size_t i) { return frames_[i]; }
  const std::vector<TrajectoryFrame>& frames() const { return frames_; }
  const TrajectoryFrame& back() const { return frames_.back(); }

  void push_back(const TrajectoryFrame& f);
  /// Frames [begin, end).
  Trajectory slice(std::size_t begin, std::size_t end) const;
  std::vector<CameraPose> poses() const;

  /// Non-empty and shared image size.
  void validate() const;

 private:
  std::vector<TrajectoryFrame> frames_;
};

/// Per-pixel ray direction and moment, stored as 6 planes of h*w values
/// (dx, dy, dz, mx, my, mz), row-major within a plane.
struct PluckerMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Vec3 direction(int x, int y) const;
  Vec3 moment(int x, int y) const;
};

struct Projection {
  Vec2 uv;
  double depth = 0.0;
};

/// D * K^-1 [u, v, 1]^T. Throws std::domain_error for depth <= 0 or uv
/// outside [0, width] x [0, height].
Vec3 unproject(const Vec2& uv, double depth, const CameraIntrinsics& k);

Vec3 to_world(const Vec3& p_cam, const CameraPose& pose);
Vec3 to_camera(const Vec3& p_world, const CameraPose& pose);

/// Empty when the point is at or behind the camera plane.
std::optional<Projection> project(const Vec3& p_world, const CameraPose& pose,
                                  const CameraIntrinsics& k);

/// Shortest-arc spherical interpolation. Falls back to normalized lerp when
/// the inputs are nearly antipodal.
Quat slerp(const Quat& q0, const Quat& q1, double t);

/// Geodesic angle between two rotations in radians.
double rotation_angle(const Quat& a, const Quat& b);

/// Appends `count` poses continuing the mean translation step and mean
/// relative rotation over the last `window` frames of `history`.
Trajectory extrapolate_trajectory(const Trajectory& history, int count, int window = 20);

PluckerMap plucker_map(const CameraPose& pose, const CameraIntrinsics& k);

Quat axis_angle(const Vec3& axis, double angle);

std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& text);
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

}  // namespace dw
