#include "deskwarp/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRayEps = 1e-9;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ULL ^
                                             splitmix(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

// Other two axes of a face with normal `axis`, in a fixed order.
std::pair<int, int> tangent_axes(int axis) {
  switch (axis) {
    case 0: return {2, 1};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Vec3 random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.15, 0.9);
  return {u(rng), u(rng), u(rng)};
}

Surface make_surface(SurfaceKind kind, int axis, const Vec3& lo, const Vec3& hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(1.5, 3.0);
  std::uniform_real_distribution<double> checker(0.25, 0.45);
  Surface s;
  s.kind = kind;
  s.axis = axis;
  s.min = lo;
  s.max = hi;
  s.texture_seed = rng();
  s.base_color = random_color(rng);
  s.accent_color = random_color(rng);
  s.noise_frequency = freq(rng);
  s.checker_size = checker(rng);
  return s;
}

// Ray against the plane x[axis] == c restricted to the face rectangle.
bool hit_face(const Vec3& o, const Vec3& d, int axis, double c, const Vec3& lo, const Vec3& hi, double& t) {
  if (d[axis] == 0.0) return false;
  const double tt = (c - o[axis]) / d[axis];
  if (!(tt > kRayEps)) return false;
  const auto [a, b] = tangent_axes(axis);
  const double pa = o[a] + tt * d[a];
  const double pb = o[b] + tt * d[b];
  if (pa < lo[a] || pa > hi[a] || pb < lo[b] || pb > hi[b]) return false;
  t = tt;
  return true;
}

}  // namespace

Vec3 Surface::shade(double a, double b) const {
  const double n = 0.65 * value_noise(texture_seed, a * noise_frequency, b * noise_frequency) +
                   0.35 * value_noise(texture_seed ^ 0x5bd1e995ULL, a * noise_frequency * 2.3, b * noise_frequency * 2.3);
  const auto ca = static_cast<std::int64_t>(std::floor(a / checker_size));
  const auto cb = static_cast<std::int64_t>(std::floor(b / checker_size));
  const double checker = ((ca + cb) & 1) ? 0.92 : 1.0;
  return ((1.0 - n) * base_color + n * accent_color) * checker;
}

void SyntheticScene::validate() const {
  if (surfaces.empty()) throw std::domain_error("scene: no surfaces");
  for (const auto& s : surfaces) {
    const Vec3 e = s.extent();
    for (int i = 0; i < 3; ++i) {
      const bool flat = s.kind == SurfaceKind::rect && i == s.axis;
      if (flat ? e[i] != 0.0 : !(e[i] > 0.0)) throw std::domain_error("scene: surface extent must be positive");
    }
  }
}

SyntheticScene SyntheticScene::translated(const Vec3& offset) const {
  SyntheticScene out = *this;
  for (auto& s : out.surfaces) {
    s.min += offset;
    s.max += offset;
  }
  return out;
}

std::size_t RgbdFrame::finite_depth_count() const {
  return static_cast<std::size_t>(
      std::count_if(depth.data.begin(), depth.data.end(), [](double d) { return std::isfinite(d); }));
}

SyntheticScene generate_scene(std::uint64_t seed, int complexity) {
  if (complexity < 1) throw std::domain_error("generate_scene: complexity must be >= 1");
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  SyntheticScene scene;
  scene.seed = seed;
  scene.background = Vec3(0.05, 0.05, 0.08);

  const double wall_z = 2.2 + jitter(rng);
  const double floor_y = 0.8 + 0.5 * jitter(rng);
  const double ceil_y = -0.8 + 0.5 * jitter(rng);
  const double side_x = 1.6 + jitter(rng);
  int boxes_made = 0;

  auto add_box = [&]() {
    std::uniform_real_distribution<double> size(0.25, 0.5);
    std::uniform_real_distribution<double> zpos(1.1, 1.8);
    std::uniform_real_distribution<double> xmag(0.3, 0.9);
    const double sx = size(rng), sy = size(rng) + 0.1, sz = size(rng);
    const double side = (boxes_made % 2 == 0) ? -1.0 : 1.0;
    const double cx = side * xmag(rng);
    const double cz = zpos(rng);
    const Vec3 lo(cx - sx / 2, floor_y - sy, std::min(cz - sz / 2, wall_z - sz - 0.05));
    const Vec3 hi(lo.x() + sx, floor_y, lo.z() + sz);
    ++boxes_made;
    return make_surface(SurfaceKind::box, 0, lo, hi, rng);
  };

  for (int i = 0; i < complexity; ++i) {
    switch (i) {
      case 0:
        scene.surfaces.push_back(
            make_surface(SurfaceKind::rect, 2, Vec3(-2.5, -2.0, wall_z), Vec3(2.5, 2.0, wall_z), rng));
        break;
      case 2:
        scene.surfaces.push_back(
            make_surface(SurfaceKind::rect, 1, Vec3(-2.5, floor_y, -2.0), Vec3(2.5, floor_y, wall_z), rng));
        break;
      case 4:
        scene.surfaces.push_back(
            make_surface(SurfaceKind::rect, 0, Vec3(-side_x, -2.0, -2.0), Vec3(-side_x, 2.0, wall_z), rng));
        break;
      case 5:
        scene.surfaces.push_back(
            make_surface(SurfaceKind::rect, 0, Vec3(side_x, -2.0, -2.0), Vec3(side_x, 2.0, wall_z), rng));
        break;
      case 7:
        scene.surfaces.push_back(
            make_surface(SurfaceKind::rect, 1, Vec3(-2.5, ceil_y, -2.0), Vec3(2.5, ceil_y, wall_z), rng));
        break;
      default:
        scene.surfaces.push_back(add_box());
        break;
    }
  }
  return scene;
}

RayHit cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  best.t = kInf;
  for (const auto& s : scene.surfaces) {
    if (s.kind == SurfaceKind::rect) {
      double t = 0.0;
      if (hit_face(origin, dir, s.axis, s.min[s.axis], s.min, s.max, t) && t < best.t) {
        const auto [a, b] = tangent_axes(s.axis);
        const Vec3 p = origin + t * dir;
        best = {t, s.shade(p[a] - s.min[a], p[b] - s.min[b]), true};
      }
      continue;
    }
    for (int axis = 0; axis < 3; ++axis) {
      for (const double c : {s.min[axis], s.max[axis]}) {
        double t = 0.0;
        if (hit_face(origin, dir, axis, c, s.min, s.max, t) && t < best.t) {
          const auto [a, b] = tangent_axes(axis);
          const Vec3 p = origin + t * dir;
          best = {t, s.shade(p[a] - s.min[a] + (c == s.max[axis] ? 7.0 : 0.0), p[b] - s.min[b]), true};
        }
      }
    }
  }
  if (!best.hit) best.color = scene.background;
  return best;
}

RgbdFrame render_gt(const SyntheticScene& scene, const CameraPose& pose, const CameraIntrinsics& k) {
  k.validate();
  pose.validate();
  RgbdFrame f;
  f.pose = pose;
  f.intrinsics = k;
  f.rgb = Image(k.width, k.height, 3);
  f.depth = Image(k.width, k.height, 1);
  const Mat3 r = pose.rotation_matrix();
  const Vec3 o = pose.center();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // camera-frame direction with unit z, so the ray parameter is the depth
      const Vec3 d_cam((x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0);
      const RayHit h = cast_ray(scene, o, r * d_cam);
      for (int c = 0; c < 3; ++c) f.rgb.at(x, y, c) = std::clamp(h.color[c], 0.0, 1.0);
      f.depth.at(x, y, 0) = h.hit ? h.t : kInf;
    }
  }
  return f;
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "dolly") return TrajectoryKind::dolly;
  if (s == "orbit") return TrajectoryKind::orbit;
  if (s == "lateral") return TrajectoryKind::lateral;
  if (s == "mixed") return TrajectoryKind::mixed;
  throw std::domain_error("unknown trajectory kind: " + s);
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::dolly: return "dolly";
    case TrajectoryKind::orbit: return "orbit";
    case TrajectoryKind::lateral: return "lateral";
    case TrajectoryKind::mixed: return "mixed";
  }
  return "unknown";
}

CameraIntrinsics default_intrinsics(const TrajectoryOptions& opts) {
  const double f = opts.focal_scale * opts.width;
  return {f, f, opts.width / 2.0, opts.height / 2.0, opts.width, opts.height};
}

double surface_coverage(const RgbdFrame& frame) {
  return static_cast<double>(frame.finite_depth_count()) / static_cast<double>(frame.depth.pixel_count());
}

Trajectory sample_trajectory(const SyntheticScene& scene, TrajectoryKind kind, int length, std::uint64_t seed,
                             const TrajectoryOptions& opts) {
  if (length < 2) throw std::domain_error("sample_trajectory: length must be >= 2");
  const CameraIntrinsics k = default_intrinsics(opts);
  constexpr int kMaxAttempts = 32;
  Trajectory best;
  double best_cov = -1.0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::mt19937_64 rng(splitmix(seed * 7919 + static_cast<std::uint64_t>(attempt)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vec3 start(0.2 * u(rng), 0.1 * u(rng), -0.4 + 0.2 * u(rng));
    const double yaw0 = 0.12 * u(rng);
    const double travel = opts.travel > 0.0 ? opts.travel : 0.6 + 0.3 * (u(rng) + 1.0) / 2.0;
    const double dir_sign = u(rng) < 0.0 ? -1.0 : 1.0;
    const double arc = (opts.orbit_degrees > 0.0 ? opts.orbit_degrees : 24.0 + 8.0 * (u(rng) + 1.0)) *
                       std::numbers::pi / 180.0;
    const double n1 = static_cast<double>(length - 1);

    Trajectory traj;
    for (int i = 0; i < length; ++i) {
      const double s = i / n1;
      TrajectoryFrame f;
      f.frame = i;
      f.intrinsics = k;
      switch (kind) {
        case TrajectoryKind::dolly: {
          const Quat q = axis_angle(Vec3::UnitY(), yaw0);
          f.pose = {q, start + (travel * s) * (q * Vec3::UnitZ())};
          break;
        }
        case TrajectoryKind::orbit: {
          const Vec3 pivot(start.x(), start.y(), 1.5);
          const double radius = pivot.z() - start.z();
          const double angle = dir_sign * arc * (s - 0.5);
          const Quat q = axis_angle(Vec3::UnitY(), angle);
          f.pose = {q, pivot + q * Vec3(0.0, 0.0, -radius)};
          break;
        }
        case TrajectoryKind::lateral: {
          const Quat q = axis_angle(Vec3::UnitY(), yaw0);
          f.pose = {q, start + Vec3(dir_sign * travel * (s - 0.5), 0.0, 0.0)};
          break;
        }
        case TrajectoryKind::mixed: {
          const double yaw = yaw0 + 0.15 * std::sin(std::numbers::pi * s);
          const Quat q = axis_angle(Vec3::UnitY(), yaw) * axis_angle(Vec3::UnitX(), 0.05 * std::sin(2.0 * std::numbers::pi * s));
          f.pose = {q.normalized(),
                    start + Vec3(dir_sign * 0.5 * travel * (s - 0.5), 0.05 * std::sin(std::numbers::pi * s), 0.6 * travel * s)};
          break;
        }
      }
      traj.push_back(f);
    }
    const double cov = surface_coverage(render_gt(scene, traj[0].pose, k));
    if (cov >= 0.7) return traj;
    if (cov > best_cov) {
      best_cov = cov;
      best = traj;
    }
  }
  return best;
}

std::uint64_t texture_hash(const SyntheticScene& scene) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : scene.surfaces) {
    h = fnv1a(h, &s.texture_seed, sizeof(s.texture_seed));
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        const Vec3 c = s.shade(0.17 * i, 0.13 * j);
        h = fnv1a(h, c.data(), 3 * sizeof(double));
      }
    }
  }
  return h;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

std::string scene_to_json(const SyntheticScene& scene) {
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["background"] = vec_json(scene.background);
  j["surfaces"] = nlohmann::json::array();
  for (const auto& s : scene.surfaces) {
    j["surfaces"].push_back({{"kind", s.kind == SurfaceKind::rect ? "rect" : "box"},
                             {"axis", s.axis},
                             {"position", vec_json(s.min)},
                             {"extent", vec_json(s.extent())},
                             {"texture_seed", s.texture_seed},
                             {"base_color", vec_json(s.base_color)},
                             {"accent_color", vec_json(s.accent_color)},
                             {"noise_frequency", s.noise_frequency},
                             {"checker_size", s.checker_size}});
  }
  return j.dump(2);
}

SyntheticScene scene_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SyntheticScene scene;
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.background = json_vec(j.at("background"));
  for (const auto& js : j.at("surfaces")) {
    Surface s;
    s.kind = js.at("kind").get<std::string>() == "rect" ? SurfaceKind::rect : SurfaceKind::box;
    s.axis = js.at("axis").get<int>();
    s.min = json_vec(js.at("position"));
    s.max = s.min + json_vec(js.at("extent"));
    if (s.kind == SurfaceKind::rect) s.max[s.axis] = s.min[s.axis];
    s.texture_seed = js.at("texture_seed").get<std::uint64_t>();
    s.base_color = json_vec(js.at("base_color"));
    s.accent_color = json_vec(js.at("accent_color"));
    s.noise_frequency = js.at("noise_frequency").get<double>();
    s.checker_size = js.at("checker_size").get<double>();
    scene.surfaces.push_back(s);
  }
  scene.validate();
  return scene;
}

void save_scene(const std::string& path, const SyntheticScene& scene) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << scene_to_json(scene) << "\n";
}

SyntheticScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

void save_frame(const std::string& prefix, const RgbdFrame& frame) {
  write_png(prefix + ".png", frame.rgb);
  write_raw_float(prefix + ".depth", frame.depth);
  Trajectory t;
  t.push_back({0, frame.pose, frame.intrinsics});
  save_trajectory(prefix + ".pose.json", t);
}

RgbdFrame load_frame(const std::string& prefix) {
  RgbdFrame f;
  f.rgb = read_png(prefix + ".png");
  f.depth = read_raw_float(prefix + ".depth");
  const Trajectory t = load_trajectory(prefix + ".pose.json");
  f.pose = t[0].pose;
  f.intrinsics = t[0].intrinsics;
  return f;
}

}  // namespace dw
