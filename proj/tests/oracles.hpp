#pragma once

// Scalar reference implementations used as test oracles. They deliberately
// avoid the library's own helpers so a shared bug cannot hide.

#include "deskwarp/geometry.hpp"
#include "deskwarp/latent.hpp"
#include "deskwarp/schedule.hpp"
#include "deskwarp/warp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using dw::Vec3;

inline Eigen::Matrix3d k_matrix(const dw::CameraIntrinsics& k) {
  Eigen::Matrix3d m;
  m << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  return m;
}

/// D * K^-1 [u v 1] through a general 3x3 inverse.
inline Vec3 unproject(double u, double v, double depth, const dw::CameraIntrinsics& k) {
  return depth * (k_matrix(k).inverse() * Vec3(u, v, 1.0));
}

inline Eigen::Matrix3d rot(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// Angle of a rotation matrix from its axis-angle decomposition.
inline double angle_of(const Eigen::Matrix3d& r) { return Eigen::AngleAxisd(r).angle(); }

inline dw::LatentChunk random_chunk(int t, int c, int h, int w, int s, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  dw::LatentChunk z(t, c, h, w, s);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : z.data) v = u(rng);
  return z;
}

inline dw::LatentMask random_mask(int t, int h, int w, std::mt19937_64& rng) {
  dw::LatentMask m(t, h, w);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() & 1u);
  return m;
}

inline dw::LatentChunk composite(const dw::LatentChunk& zw, const dw::LatentChunk& zg, const dw::LatentMask& m) {
  dw::LatentChunk out = zg;
  for (int t = 0; t < zg.frames; ++t)
    for (int c = 0; c < zg.channels; ++c)
      for (int y = 0; y < zg.height; ++y)
        for (int x = 0; x < zg.width; ++x) {
          const double mm = m.at(t, y, x) ? 1.0 : 0.0;
          out.at(t, c, y, x) = mm * zw.at(t, c, y, x) + (1.0 - mm) * zg.at(t, c, y, x);
        }
  return out;
}

inline dw::SigmaMap sigma_map(const dw::LatentMask& m, const std::vector<double>& sw, const std::vector<double>& sf) {
  dw::SigmaMap s(m.frames, m.height, m.width);
  for (int t = 0; t < m.frames; ++t)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        const double mm = m.at(t, y, x) ? 1.0 : 0.0;
        s.at(t, y, x) = mm * sw[t] + (1.0 - mm) * sf[t];
      }
  return s;
}

inline dw::LatentChunk noise(const dw::LatentChunk& z, const dw::SigmaMap& s, const dw::LatentChunk& eps) {
  dw::LatentChunk out = z;
  for (int t = 0; t < z.frames; ++t)
    for (int c = 0; c < z.channels; ++c)
      for (int y = 0; y < z.height; ++y)
        for (int x = 0; x < z.width; ++x) {
          const double sg = s.at(t, y, x);
          out.at(t, c, y, x) = (1.0 - sg) * z.at(t, c, y, x) + sg * eps.at(t, c, y, x);
        }
  return out;
}

/// Start levels: 0 on history tokens, tau on valid generated cells,
/// sigma_max on the rest.
inline dw::SigmaMap start_map(const dw::LatentMask& m, double tau, double sigma_max, int history) {
  dw::SigmaMap s(m.frames, m.height, m.width);
  for (int t = 0; t < m.frames; ++t)
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        s.at(t, y, x) = t < history ? 0.0 : (m.at(t, y, x) ? tau : sigma_max);
  return s;
}

/// Cell (row start level s0, column j) of the schedule table, with the
/// column ladder k = N - j counting down from N.
inline double schedule_cell(double s0, int j, int n) {
  const double ladder = static_cast<double>(n - j) / static_cast<double>(n);
  return std::min(ladder, s0);
}

/// Space-to-depth written as direct index arithmetic on pixel coordinates.
inline double latent_value(const std::vector<dw::Image>& imgs, int s, int t, int c, int y, int x) {
  const int rgb = c % 3;
  const int d = c / 3;
  const int dy = d / s, dx = d % s;
  return imgs[t].at(x * s + dx, y * s + dy, rgb);
}

/// Every point projected independently; per pixel the nearest point whose
/// projection lies within r of the pixel center, lowest index on ties.
inline dw::WarpedView brute_force_splat(const dw::RgbPointCloud& cloud, const dw::CameraPose& pose,
                                        const dw::CameraIntrinsics& k, double r) {
  const Eigen::Matrix3d rw = pose.rotation.toRotationMatrix();
  const Eigen::Matrix3d km = k_matrix(k);
  std::vector<Vec3> uvz(cloud.size());
  std::vector<bool> front(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = rw.transpose() * (cloud.positions[i] - pose.translation);
    front[i] = pc.z() > 0.0;
    const Vec3 h = km * pc;
    uvz[i] = Vec3(h.x() / pc.z(), h.y() / pc.z(), pc.z());
  }
  dw::WarpedView out{dw::Image(k.width, k.height, 3), dw::Mask(k.width, k.height)};
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      int best = -1;
      double bz = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (!front[i]) continue;
        const double dx = x + 0.5 - uvz[i].x(), dy = y + 0.5 - uvz[i].y();
        if (dx * dx + dy * dy > r * r) continue;
        if (uvz[i].z() < bz) {
          bz = uvz[i].z();
          best = static_cast<int>(i);
        }
      }
      if (best < 0) continue;
      out.mask.at(x, y) = 1;
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = cloud.colors[best][c];
    }
  return out;
}

/// Central finite differences of f at x in coordinate i.
inline double central_difference(const std::function<double()>& f, double& xi, double h) {
  const double x0 = xi;
  xi = x0 + h;
  const double fp = f();
  xi = x0 - h;
  const double fm = f();
  xi = x0;
  return (fp - fm) / (2.0 * h);
}

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
