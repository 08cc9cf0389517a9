#include "deskwarp/cache.hpp"

#include "deskwarp/autodiff.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace dw {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

double SplatCloud::radius(std::size_t i) const { return std::exp(log_radii[i]); }

double SplatCloud::opacity(std::size_t i) const { return logistic(logit_opacities[i]); }

Vec3 SplatCloud::color(std::size_t i) const {
  const Vec3& l = color_logits[i];
  return {logistic(l.x()), logistic(l.y()), logistic(l.z())};
}

void SplatCloud::validate() const {
  const std::size_t n = positions.size();
  if (n == 0) throw std::domain_error("SplatCloud: no splats");
  if (log_radii.size() != n || color_logits.size() != n || logit_opacities.size() != n)
    throw std::domain_error("SplatCloud: parameter arrays differ in length");
  for (std::size_t i = 0; i < n; ++i)
    if (!positions[i].allFinite() || !std::isfinite(log_radii[i]) || !color_logits[i].allFinite() ||
        !std::isfinite(logit_opacities[i]))
      throw std::domain_error("SplatCloud: non-finite parameter at splat " + std::to_string(i));
}

void CacheConfig::validate() const {
  if (steps < 0) throw std::domain_error("cache: steps must be >= 0");
  if (!(learning_rate > 0.0)) throw std::domain_error("cache: learning rate must be positive");
  if (!(init_radius_px > 0.0)) throw std::domain_error("cache: init radius must be positive");
  if (stride < 1) throw std::domain_error("cache: stride must be >= 1");
  if (!(cutoff_sigma >= 0.0)) throw std::domain_error("cache: cutoff must be >= 0");
  if (!(alpha_threshold > 0.0 && alpha_threshold < 1.0))
    throw std::domain_error("cache: alpha threshold must lie in (0, 1)");
}

SplatCloud init_cache(const std::vector<RgbdFrame>& history, const CacheConfig& cfg) {
  cfg.validate();
  if (history.empty()) throw std::domain_error("init_cache: empty history");
  SplatCloud cloud;
  for (const auto& frame : history) {
    const RgbPointCloud pts = lift(frame, cfg.stride);
    const Mat3 r = frame.pose.rotation_matrix();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double z = (r.transpose() * (pts.positions[i] - frame.pose.translation)).z();
      const double world_r = cfg.init_radius_px * cfg.stride * z / frame.intrinsics.fx;
      cloud.positions.push_back(pts.positions[i]);
      cloud.log_radii.push_back(std::log(world_r));
      Vec3 l;
      for (int c = 0; c < 3; ++c) l[c] = logit(std::clamp(pts.colors[i][c], 0.01, 0.99));
      cloud.color_logits.push_back(l);
      cloud.logit_opacities.push_back(0.0);
    }
  }
  if (cloud.size() == 0) throw std::domain_error("init_cache: history has no finite-depth pixels");
  return cloud;
}

SplatGradient::SplatGradient(std::size_t n)
    : positions(n, Vec3::Zero()), log_radii(n, 0.0), color_logits(n, Vec3::Zero()), logit_opacities(n, 0.0) {}

namespace {

constexpr double kNearPlane = 1e-6;

struct ScreenSplat {
  bool visible = false;
  Vec3 p_cam = Vec3::Zero();
  double u = 0.0, v = 0.0;
  double sx = 0.0, sy = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
};

struct Entry {
  int splat;
  double w;
  double gauss;   // exp(-q / 2), so w = opacity * gauss
  double dx, dy;  // pixel center minus splat center
};

// Per-pixel lists of contributing splats in compositing order (CSR layout).
struct Coverage {
  std::vector<ScreenSplat> screen;
  std::vector<std::size_t> offsets;
  std::vector<Entry> entries;
};

Coverage build_coverage(const SplatCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                        double cutoff_sigma) {
  const std::size_t n = cloud.size();
  const Mat3 rt = pose.rotation_matrix().transpose();
  Coverage cov;
  cov.screen.resize(n);
  std::vector<int> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ScreenSplat& s = cov.screen[i];
    s.p_cam = rt * (cloud.positions[i] - pose.translation);
    if (s.p_cam.z() <= kNearPlane) continue;
    const double z = s.p_cam.z();
    const double r = cloud.radius(i);
    s.u = k.fx * s.p_cam.x() / z + k.cx;
    s.v = k.fy * s.p_cam.y() / z + k.cy;
    s.sx = r * k.fx / z;
    s.sy = r * k.fy / z;
    s.opacity = cloud.opacity(i);
    s.color = cloud.color(i);
    s.visible = true;
    order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cov.screen[a].p_cam.z() < cov.screen[b].p_cam.z(); });

  const int w = k.width, h = k.height;
  auto bounds = [&](const ScreenSplat& s, int& x0, int& x1, int& y0, int& y1) {
    if (cutoff_sigma <= 0.0) {
      x0 = 0, x1 = w - 1, y0 = 0, y1 = h - 1;
      return;
    }
    const double rx = cutoff_sigma * s.sx, ry = cutoff_sigma * s.sy;
    x0 = std::max(0, static_cast<int>(std::ceil(s.u - rx - 0.5)));
    x1 = std::min(w - 1, static_cast<int>(std::floor(s.u + rx - 0.5)));
    y0 = std::max(0, static_cast<int>(std::ceil(s.v - ry - 0.5)));
    y1 = std::min(h - 1, static_cast<int>(std::floor(s.v + ry - 0.5)));
  };
  const double cut2 = cutoff_sigma * cutoff_sigma;
  auto weight = [&](const ScreenSplat& s, int x, int y, Entry& e) {
    e.dx = (x + 0.5) - s.u;
    e.dy = (y + 0.5) - s.v;
    const double q = e.dx * e.dx / (s.sx * s.sx) + e.dy * e.dy / (s.sy * s.sy);
    if (cutoff_sigma > 0.0 && q > cut2) return false;
    e.gauss = std::exp(-0.5 * q);
    e.w = s.opacity * e.gauss;
    return true;
  };

  std::vector<std::size_t> counts(static_cast<std::size_t>(w) * h + 1, 0);
  Entry e{};
  for (int i : order) {
    int x0, x1, y0, y1;
    bounds(cov.screen[i], x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (weight(cov.screen[i], x, y, e)) ++counts[static_cast<std::size_t>(y) * w + x + 1];
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  cov.offsets = counts;
  cov.entries.resize(counts.back());
  std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
  for (int i : order) {
    int x0, x1, y0, y1;
    bounds(cov.screen[i], x0, x1, y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (weight(cov.screen[i], x, y, e)) {
          e.splat = i;
          cov.entries[fill[static_cast<std::size_t>(y) * w + x]++] = e;
        }
  }
  return cov;
}

// Composites one pixel; returns color and transmittance left after all splats.
void composite_pixel(const Coverage& cov, std::size_t p, Vec3& color, double& transmittance) {
  color.setZero();
  transmittance = 1.0;
  for (std::size_t j = cov.offsets[p]; j < cov.offsets[p + 1]; ++j) {
    const Entry& e = cov.entries[j];
    color += transmittance * e.w * cov.screen[e.splat].color;
    transmittance *= 1.0 - e.w;
  }
}

// Accumulates d(loss)/d(parameters) for one view. `dl_dc` is the loss
// gradient with respect to each pixel's composited color.
void backward_view(const SplatCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k, const Coverage& cov,
                   const std::vector<Vec3>& dl_dc, SplatGradient& g) {
  const std::size_t n = cloud.size();
  std::vector<double> g_u(n, 0.0), g_v(n, 0.0), g_sx(n, 0.0), g_sy(n, 0.0), g_op(n, 0.0);
  std::vector<Vec3> g_color(n, Vec3::Zero());
  std::vector<double> trans;
  for (std::size_t p = 0; p + 1 < cov.offsets.size(); ++p) {
    const std::size_t b = cov.offsets[p], e_end = cov.offsets[p + 1];
    if (b == e_end) continue;
    const Vec3& gc = dl_dc[p];
    trans.resize(e_end - b);
    double t = 1.0;
    for (std::size_t j = b; j < e_end; ++j) {
      trans[j - b] = t;
      t *= 1.0 - cov.entries[j].w;
    }
    // rest = color composited behind splat j, built back to front.
    Vec3 rest = Vec3::Zero();
    for (std::size_t j = e_end; j-- > b;) {
      const Entry& e = cov.entries[j];
      const ScreenSplat& s = cov.screen[e.splat];
      const double tj = trans[j - b];
      g_color[e.splat] += tj * e.w * gc;
      const double dl_dw = tj * gc.dot(s.color - rest);
      rest = e.w * s.color + (1.0 - e.w) * rest;
      // w = opacity * exp(-q / 2)
      const double dl_dq = -0.5 * dl_dw * e.w;
      g_op[e.splat] += dl_dw * e.gauss;
      g_u[e.splat] += dl_dq * (-2.0 * e.dx / (s.sx * s.sx));
      g_v[e.splat] += dl_dq * (-2.0 * e.dy / (s.sy * s.sy));
      g_sx[e.splat] += dl_dq * (-2.0 * e.dx * e.dx / (s.sx * s.sx * s.sx));
      g_sy[e.splat] += dl_dq * (-2.0 * e.dy * e.dy / (s.sy * s.sy * s.sy));
    }
  }
  const Mat3 r = pose.rotation_matrix();
  for (std::size_t i = 0; i < n; ++i) {
    const ScreenSplat& s = cov.screen[i];
    if (!s.visible) continue;
    const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
    Vec3 d_pc;
    d_pc.x() = g_u[i] * k.fx / z;
    d_pc.y() = g_v[i] * k.fy / z;
    d_pc.z() = -g_u[i] * k.fx * x / (z * z) - g_v[i] * k.fy * y / (z * z) - g_sx[i] * s.sx / z -
               g_sy[i] * s.sy / z;
    g.positions[i] += r * d_pc;
    g.log_radii[i] += g_sx[i] * s.sx + g_sy[i] * s.sy;
    for (int c = 0; c < 3; ++c) g.color_logits[i][c] += g_color[i][c] * s.color[c] * (1.0 - s.color[c]);
    g.logit_opacities[i] += g_op[i] * s.opacity * (1.0 - s.opacity);
  }
}

}  // namespace

SplatRender render_splats(const SplatCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                          double cutoff_sigma) {
  k.validate();
  SplatRender out{Image(k.width, k.height, 3), Image(k.width, k.height, 1)};
  if (cloud.size() == 0) return out;
  const Coverage cov = build_coverage(cloud, pose, k, cutoff_sigma);
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      Vec3 c;
      double t;
      composite_pixel(cov, static_cast<std::size_t>(y) * k.width + x, c, t);
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = c[ch];
      out.alpha.at(x, y, 0) = 1.0 - t;
    }
  return out;
}

PhotometricLoss photometric_loss(const SplatCloud& cloud, const std::vector<RgbdFrame>& views, double cutoff_sigma,
                                 bool with_grad) {
  PhotometricLoss out{0.0, SplatGradient(with_grad ? cloud.size() : 0)};
  for (const auto& view : views) {
    const CameraIntrinsics& k = view.intrinsics;
    const Coverage cov = build_coverage(cloud, view.pose, k, cutoff_sigma);
    const double norm = 1.0 / (3.0 * k.width * k.height);
    std::vector<Vec3> dl_dc(static_cast<std::size_t>(k.width) * k.height);
    double sse = 0.0;
    for (int y = 0; y < k.height; ++y)
      for (int x = 0; x < k.width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * k.width + x;
        Vec3 c;
        double t;
        composite_pixel(cov, p, c, t);
        for (int ch = 0; ch < 3; ++ch) {
          const double d = c[ch] - view.rgb.at(x, y, ch);
          sse += d * d;
          dl_dc[p][ch] = 2.0 * d * norm;
        }
      }
    out.value += sse * norm;
    if (with_grad) backward_view(cloud, view.pose, k, cov, dl_dc, out.grad);
  }
  return out;
}

namespace {

bool gradient_finite(const SplatGradient& g) {
  for (std::size_t i = 0; i < g.positions.size(); ++i)
    if (!g.positions[i].allFinite() || !std::isfinite(g.log_radii[i]) || !g.color_logits[i].allFinite() ||
        !std::isfinite(g.logit_opacities[i]))
      return false;
  return true;
}

}  // namespace

CacheOptimization optimize_cache(const SplatCloud& cloud, const std::vector<RgbdFrame>& history,
                                 const CacheConfig& cfg) {
  cfg.validate();
  cloud.validate();
  CacheOptimization out{cloud, {}};
  if (cfg.steps == 0) return out;
  SplatCloud& c = out.cloud;
  const std::size_t n = c.size();
  ad::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-15});
  const std::size_t s_pos = adam.add_slot(3 * n), s_rad = adam.add_slot(n), s_col = adam.add_slot(3 * n),
                    s_op = adam.add_slot(n);
  auto flat = [](std::vector<Vec3>& v) { return std::span<double>(v.data()->data(), 3 * v.size()); };
  for (int step = 0; step < cfg.steps; ++step) {
    PhotometricLoss l = photometric_loss(c, history, cfg.cutoff_sigma, true);
    if (!std::isfinite(l.value) || !gradient_finite(l.grad))
      throw std::runtime_error("optimize_cache: non-finite loss at step " + std::to_string(step) +
                               " (last finite loss " +
                               (out.loss_trace.empty() ? std::string("n/a") : std::to_string(out.loss_trace.back())) +
                               ")");
    out.loss_trace.push_back(l.value);
    adam.begin_step();
    adam.update(s_pos, flat(c.positions), flat(l.grad.positions));
    adam.update(s_rad, c.log_radii, l.grad.log_radii);
    adam.update(s_col, flat(c.color_logits), flat(l.grad.color_logits));
    adam.update(s_op, c.logit_opacities, l.grad.logit_opacities);
  }
  out.loss_trace.push_back(photometric_loss(c, history, cfg.cutoff_sigma, false).value);
  return out;
}

WarpedPriorChunk render_priors(const SplatCloud& cloud, const Trajectory& targets, double alpha_threshold,
                               double cutoff_sigma) {
  if (!(alpha_threshold > 0.0 && alpha_threshold < 1.0))
    throw std::domain_error("render_priors: alpha threshold must lie in (0, 1)");
  WarpedPriorChunk out;
  for (const auto& f : targets.frames()) {
    SplatRender r = render_splats(cloud, f.pose, f.intrinsics, cutoff_sigma);
    Mask m(f.intrinsics.width, f.intrinsics.height);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        m.at(x, y) = r.alpha.at(x, y, 0) >= alpha_threshold ? 1 : 0;
        if (!m.at(x, y))
          for (int c = 0; c < 3; ++c) r.rgb.at(x, y, c) = 0.0;
      }
    out.warped.push_back(std::move(r.rgb));
    out.masks.push_back(std::move(m));
    out.poses.push_back(f.pose);
    out.intrinsics.push_back(f.intrinsics);
  }
  return out;
}

void save_splats(const std::string& path, const SplatCloud& cloud) {
  cloud.validate();
  const std::size_t n = cloud.size();
  std::vector<double> flat;
  flat.reserve(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) flat.push_back(cloud.positions[i][c]);
    flat.push_back(cloud.log_radii[i]);
    for (int c = 0; c < 3; ++c) flat.push_back(cloud.color_logits[i][c]);
    flat.push_back(cloud.logit_opacities[i]);
  }
  const auto bytes = to_float32_le(flat);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_splats: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  nlohmann::json header = {{"dtype", "float32"},
                           {"endianness", "little"},
                           {"count", n},
                           {"fields", {"px", "py", "pz", "log_radius", "color_logit_r", "color_logit_g",
                                       "color_logit_b", "logit_opacity"}}};
  std::ofstream hf(path + ".json");
  hf << header.dump(2) << "\n";
}

SplatCloud load_splats(const std::string& path) {
  std::ifstream hf(path + ".json");
  if (!hf) throw std::runtime_error("load_splats: missing header " + path + ".json");
  const auto header = nlohmann::json::parse(hf);
  if (header.at("dtype") != "float32") throw std::runtime_error("load_splats: unsupported dtype");
  const std::size_t n = header.at("count").get<std::size_t>();
  std::ifstream f(path, std::ios::binary);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() != n * 8 * 4) throw std::runtime_error("load_splats: payload size does not match header");
  const auto flat = from_float32_le(bytes.data(), n * 8);
  SplatCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = flat.data() + i * 8;
    cloud.positions.emplace_back(p[0], p[1], p[2]);
    cloud.log_radii.push_back(p[3]);
    cloud.color_logits.emplace_back(p[4], p[5], p[6]);
    cloud.logit_opacities.push_back(p[7]);
  }
  cloud.validate();
  return cloud;
}

}  // namespace dw
