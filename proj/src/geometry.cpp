#include "deskwarp/geometry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dw {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::domain_error("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::domain_error("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::domain_error("intrinsics: principal point outside the image");
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

CameraIntrinsics CameraIntrinsics::downscaled(int factor) const {
  if (factor <= 0 || width % factor != 0 || height % factor != 0)
    throw std::domain_error("intrinsics: downscale factor must divide the image size");
  const double s = 1.0 / factor;
  return {fx * s, fy * s, cx * s, cy * s, width / factor, height / factor};
}

CameraPose::CameraPose(const Quat& q, const Vec3& t) : rotation(q), translation(t) {}

CameraPose CameraPose::from_matrix(const Mat3& r, const Vec3& t) {
  Quat q(r);
  q.normalize();
  return {q, t};
}

CameraPose CameraPose::compose(const CameraPose& other) const {
  Quat q = rotation * other.rotation;
  q.normalize();
  return {q, rotation * other.translation + translation};
}

CameraPose CameraPose::inverse() const {
  const Quat qi = rotation.conjugate();
  return {qi, -(qi * translation)};
}

void CameraPose::validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9) throw std::domain_error("pose: rotation quaternion is not unit-norm");
  if (!translation.allFinite()) throw std::domain_error("pose: non-finite translation");
}

Trajectory::Trajectory(std::vector<TrajectoryFrame> frames) : frames_(std::move(frames)) {}

void Trajectory::push_back(const TrajectoryFrame& f) { frames_.push_back(f); }

Trajectory Trajectory::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, frames_.size());
  begin = std::min(begin, end);
  return Trajectory(std::vector<TrajectoryFrame>(frames_.begin() + begin, frames_.begin() + end));
}

std::vector<CameraPose> Trajectory::poses() const {
  std::vector<CameraPose> out;
  out.reserve(frames_.size());
  for (const auto& f : frames_) out.push_back(f.pose);
  return out;
}

void Trajectory::validate() const {
  if (frames_.empty()) throw std::domain_error("trajectory: empty");
  for (const auto& f : frames_) {
    f.intrinsics.validate();
    f.pose.validate();
    if (f.intrinsics.width != frames_[0].intrinsics.width || f.intrinsics.height != frames_[0].intrinsics.height)
      throw std::domain_error("trajectory: frames disagree on image size");
  }
}

Vec3 PluckerMap::direction(int x, int y) const {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  const std::size_t i = static_cast<std::size_t>(y) * width + x;
  return {data[i], data[plane + i], data[2 * plane + i]};
}

Vec3 PluckerMap::moment(int x, int y) const {
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  const std::size_t i = static_cast<std::size_t>(y) * width + x;
  return {data[3 * plane + i], data[4 * plane + i], data[5 * plane + i]};
}

Vec3 unproject(const Vec2& uv, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw std::domain_error("unproject: depth must be positive and finite");
  if (!(uv.x() >= 0.0 && uv.x() <= k.width && uv.y() >= 0.0 && uv.y() <= k.height))
    throw std::domain_error("unproject: pixel coordinate outside the image");
  return {depth * (uv.x() - k.cx) / k.fx, depth * (uv.y() - k.cy) / k.fy, depth};
}

Vec3 to_world(const Vec3& p_cam, const CameraPose& pose) { return pose.apply(p_cam); }

Vec3 to_camera(const Vec3& p_world, const CameraPose& pose) {
  return pose.rotation.conjugate() * (p_world - pose.translation);
}

std::optional<Projection> project(const Vec3& p_world, const CameraPose& pose, const CameraIntrinsics& k) {
  const Vec3 p = to_camera(p_world, pose);
  if (!(p.z() > 0.0)) return std::nullopt;
  return Projection{{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy}, p.z()};
}

Quat slerp(const Quat& q0, const Quat& q1_in, double t) {
  Quat q1 = q1_in;
  double dot = q0.dot(q1);
  if (dot < 0.0) {
    q1.coeffs() = -q1.coeffs();
    dot = -dot;
  }
  dot = std::min(dot, 1.0);
  const double theta = std::acos(dot);
  const double sin_theta = std::sin(theta);
  Quat out;
  if (dot < 1e-6 || sin_theta < 1e-12) {
    // 180 degrees apart as rotations, or identical
    out.coeffs() = (1.0 - t) * q0.coeffs() + t * q1.coeffs();
  } else {
    const double a = std::sin((1.0 - t) * theta) / sin_theta;
    const double b = std::sin(t * theta) / sin_theta;
    out.coeffs() = a * q0.coeffs() + b * q1.coeffs();
  }
  out.normalize();
  return out;
}

double rotation_angle(const Quat& a, const Quat& b) {
  // 2*atan2 is better conditioned than 2*acos near zero
  const Quat rel = a.conjugate() * b;
  const double v = rel.vec().norm();
  return 2.0 * std::atan2(v, std::abs(rel.w()));
}

Quat axis_angle(const Vec3& axis, double angle) {
  return Quat(Eigen::AngleAxisd(angle, axis.normalized()));
}

Trajectory extrapolate_trajectory(const Trajectory& history, int count, int window) {
  if (history.size() < 2) throw std::domain_error("extrapolate_trajectory: need at least two history frames");
  if (window < 1) throw std::domain_error("extrapolate_trajectory: window must be >= 1");
  if (count < 0) throw std::domain_error("extrapolate_trajectory: negative count");

  const std::size_t n = history.size();
  const std::size_t frames_used = std::min<std::size_t>(n, static_cast<std::size_t>(window) + 1);
  const std::size_t first = n - frames_used;

  Vec3 mean_step = Vec3::Zero();
  Quat mean_rel = Quat::Identity();
  int k = 0;
  for (std::size_t i = first; i + 1 < n; ++i) {
    const CameraPose& a = history[i].pose;
    const CameraPose& b = history[i + 1].pose;
    mean_step += b.translation - a.translation;
    Quat rel = a.rotation.conjugate() * b.rotation;
    rel.normalize();
    ++k;
    mean_rel = (k == 1) ? rel : slerp(mean_rel, rel, 1.0 / k);
  }
  mean_step /= static_cast<double>(k);

  Trajectory out = history;
  TrajectoryFrame last = history.back();
  for (int j = 0; j < count; ++j) {
    TrajectoryFrame next = last;
    next.frame = last.frame + 1;
    next.pose.translation = last.pose.translation + mean_step;
    next.pose.rotation = last.pose.rotation * mean_rel;
    next.pose.rotation.normalize();
    out.push_back(next);
    last = next;
  }
  return out;
}

PluckerMap plucker_map(const CameraPose& pose, const CameraIntrinsics& k) {
  PluckerMap map;
  map.width = k.width;
  map.height = k.height;
  const std::size_t plane = static_cast<std::size_t>(k.width) * k.height;
  map.data.assign(6 * plane, 0.0);
  const Mat3 r = pose.rotation_matrix();
  const Vec3 o = pose.center();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 ray_cam((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0);
      const Vec3 d = (r * ray_cam).normalized();
      const Vec3 m = o.cross(d);
      const std::size_t i = static_cast<std::size_t>(y) * k.width + x;
      for (int c = 0; c < 3; ++c) {
        map.data[c * plane + i] = d[c];
        map.data[(3 + c) * plane + i] = m[c];
      }
    }
  }
  return map;
}

namespace {

nlohmann::json frame_to_json(const TrajectoryFrame& f) {
  const auto& q = f.pose.rotation;
  const auto& t = f.pose.translation;
  const auto& k = f.intrinsics;
  return {{"frame", f.frame},
          {"quaternion", {q.w(), q.x(), q.y(), q.z()}},
          {"translation", {t.x(), t.y(), t.z()}},
          {"intrinsics",
           {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}}};
}

}  // namespace

std::string trajectory_to_json(const Trajectory& traj) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : traj.frames()) arr.push_back(frame_to_json(f));
  return arr.dump(2);
}

Trajectory trajectory_from_json(const std::string& text) {
  const auto arr = nlohmann::json::parse(text);
  if (!arr.is_array()) throw std::domain_error("trajectory file: expected a JSON array");
  std::vector<TrajectoryFrame> frames;
  for (const auto& j : arr) {
    TrajectoryFrame f;
    f.frame = j.at("frame").get<int>();
    const auto& q = j.at("quaternion");
    const auto& t = j.at("translation");
    const auto& k = j.at("intrinsics");
    f.pose.rotation = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(), q.at(3).get<double>());
    f.pose.rotation.normalize();
    f.pose.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
    f.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                    k.at("cy").get<double>(), k.at("width").get<int>(), k.at("height").get<int>()};
    frames.push_back(f);
  }
  Trajectory traj(std::move(frames));
  traj.validate();
  return traj;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << trajectory_to_json(traj) << "\n";
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return trajectory_from_json(ss.str());
}

}  // namespace dw
