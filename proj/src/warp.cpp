#include "deskwarp/warp.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

namespace dw {

void RgbPointCloud::append(const RgbPointCloud& other) {
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  source_pixel.insert(source_pixel.end(), other.source_pixel.begin(), other.source_pixel.end());
}

RgbPointCloud lift(const RgbdFrame& frame, int stride) {
  if (stride < 1) throw std::domain_error("lift: stride must be >= 1");
  const auto& k = frame.intrinsics;
  RgbPointCloud cloud;
  for (int y = 0; y < k.height; y += stride) {
    for (int x = 0; x < k.width; x += stride) {
      const double d = frame.depth.at(x, y, 0);
      if (!std::isfinite(d) || !(d > 0.0)) continue;
      const Vec3 p_cam = unproject({x + 0.5, y + 0.5}, d, k);
      cloud.positions.push_back(to_world(p_cam, frame.pose));
      cloud.colors.emplace_back(frame.rgb.at(x, y, 0), frame.rgb.at(x, y, 1), frame.rgb.at(x, y, 2));
      cloud.source_pixel.push_back(y * k.width + x);
    }
  }
  return cloud;
}

WarpedView splat_render(const RgbPointCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                        double radius_px) {
  if (!(radius_px >= 0.5)) throw std::domain_error("splat_render: radius must be >= 0.5 px");
  const int w = k.width, h = k.height;
  WarpedView out{Image(w, h, 3), Mask(w, h)};
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  std::vector<int> owner(static_cast<std::size_t>(w) * h, -1);
  const double r2 = radius_px * radius_px;

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto proj = project(cloud.positions[i], pose, k);
    if (!proj) continue;
    const double u = proj->uv.x(), v = proj->uv.y(), z = proj->depth;
    // pixel centers sit at integer + 0.5
    const int x0 = std::max(0, static_cast<int>(std::ceil(u - radius_px - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(u + radius_px - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(v - radius_px - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(v + radius_px - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - u, dy = y + 0.5 - v;
        if (dx * dx + dy * dy > r2) continue;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        // strict less keeps the earlier (lower-index) point on ties
        if (z < zbuf[p]) {
          zbuf[p] = z;
          owner[p] = static_cast<int>(i);
        }
      }
    }
  }
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    out.mask.data[p] = 1;
    for (int c = 0; c < 3; ++c) out.rgb.data[3 * p + c] = cloud.colors[owner[p]][c];
  }
  return out;
}

WarpedPriorChunk one_to_all(const RgbdFrame& source, const Trajectory& targets, double radius_px) {
  if (targets.empty()) throw std::domain_error("one_to_all: no target views");
  const RgbPointCloud cloud = lift(source);
  WarpedPriorChunk chunk;
  for (const auto& f : targets.frames()) {
    WarpedView view = splat_render(cloud, f.pose, f.intrinsics, radius_px);
    chunk.warped.push_back(std::move(view.rgb));
    chunk.masks.push_back(std::move(view.mask));
    chunk.poses.push_back(f.pose);
    chunk.intrinsics.push_back(f.intrinsics);
  }
  return chunk;
}

Mask downsample_mask(const Mask& mask, int patch) {
  if (patch < 1 || mask.width % patch != 0 || mask.height % patch != 0)
    throw std::domain_error("downsample_mask: patch must divide the mask size");
  Mask out(mask.width / patch, mask.height / patch);
  const int cell = patch * patch;
  for (int by = 0; by < out.height; ++by) {
    for (int bx = 0; bx < out.width; ++bx) {
      int ones = 0;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) ones += mask.at(bx * patch + x, by * patch + y) ? 1 : 0;
      out.at(bx, by) = (2 * ones >= cell) ? 1 : 0;
    }
  }
  return out;
}

void save_warped_chunk(const std::string& dir, const WarpedPriorChunk& chunk) {
  std::filesystem::create_directories(dir);
  Trajectory poses;
  for (std::size_t t = 0; t < chunk.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu", t);
    write_png(dir + "/warped_" + name + ".png", chunk.warped[t]);
    write_raw_float(dir + "/warped_" + name + ".rgb", chunk.warped[t]);
    write_mask_png(dir + "/mask_" + name + ".png", chunk.masks[t]);
    poses.push_back({static_cast<int>(t), chunk.poses[t], chunk.intrinsics[t]});
  }
  save_trajectory(dir + "/poses.json", poses);
}

}  // namespace dw
