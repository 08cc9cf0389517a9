#pragma once

#include "deskwarp/geometry.hpp"
#include "deskwarp/image.hpp"
#include "deskwarp/scene.hpp"
#include "deskwarp/warp.hpp"

#include <string>
#include <vector>

namespace dw {

/// Isotropic Gaussian splats. Colors and opacities are stored as logits.
struct SplatCloud {
  std::vector<Vec3> positions;
  std::vector<double> log_radii;
  std::vector<Vec3> color_logits;
  std::vector<double> logit_opacities;

  std::size_t size() const { return positions.size(); }
  double radius(std::size_t i) const;
  double opacity(std::size_t i) const;
  Vec3 color(std::size_t i) const;

  /// Throws std::domain_error for an empty cloud, ragged arrays or
  /// non-finite values.
  void validate() const;
  bool operator==(const SplatCloud&) const = default;
};

struct CacheConfig {
  int steps = 500;
  double learning_rate = 1.6e-3;
  /// Initial radius in units of the source pixel footprint: a splat lifted
  /// at depth Z gets world radius init_radius_px * stride * Z / fx.
  double init_radius_px = 0.7;
  int stride = 1;
  /// Splats are truncated beyond this many screen-space standard
  /// deviations. 0 disables truncation.
  double cutoff_sigma = 3.0;
  double alpha_threshold = 0.5;

  void validate() const;
};

double logistic(double x);
double logit(double p);

SplatCloud init_cache(const std::vector<RgbdFrame>& history, const CacheConfig& cfg);

struct SplatRender {
  Image rgb;
  /// One channel, accumulated opacity in [0, 1].
  Image alpha;
};

/// Front-to-back compositing ordered by splat-center camera depth (ties by
/// index). Weight of a splat at a pixel is opacity * exp(-d^2 / (2 sigma^2))
/// with sigma = radius * f / depth.
SplatRender render_splats(const SplatCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                          double cutoff_sigma = 3.0);

/// Gradient with the same layout as SplatCloud.
struct SplatGradient {
  std::vector<Vec3> positions;
  std::vector<double> log_radii;
  std::vector<Vec3> color_logits;
  std::vector<double> logit_opacities;

  explicit SplatGradient(std::size_t n = 0);
};

struct PhotometricLoss {
  double value = 0.0;
  SplatGradient grad;
};

/// Sum over views of the mean squared RGB error, and its exact gradient.
PhotometricLoss photometric_loss(const SplatCloud& cloud, const std::vector<RgbdFrame>& views,
                                 double cutoff_sigma = 3.0, bool with_grad = true);

struct CacheOptimization {
  SplatCloud cloud;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
};

/// Adam on the photometric loss. Throws std::runtime_error on a non-finite
/// loss or gradient.
CacheOptimization optimize_cache(const SplatCloud& cloud, const std::vector<RgbdFrame>& history,
                                 const CacheConfig& cfg);

/// Render each target pose; mask = alpha >= threshold, masked-out pixels black.
WarpedPriorChunk render_priors(const SplatCloud& cloud, const Trajectory& targets, double alpha_threshold,
                               double cutoff_sigma = 3.0);

/// Little-endian float32 arrays at `path` plus a JSON header at `path + ".json"`.
void save_splats(const std::string& path, const SplatCloud& cloud);
SplatCloud load_splats(const std::string& path);

}  // namespace dw
