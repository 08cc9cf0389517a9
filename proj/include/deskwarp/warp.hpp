#pragma once

#include "deskwarp/geometry.hpp"
#include "deskwarp/image.hpp"
#include "deskwarp/scene.hpp"

#include <vector>

namespace dw {

struct RgbPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  /// Row-major index of the source pixel each point came from.
  std::vector<int> source_pixel;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void append(const RgbPointCloud& other);
};

struct WarpedView {
  Image rgb;
  Mask mask;
};

/// Warped priors and validity masks for a sequence of target views.
struct WarpedPriorChunk {
  std::vector<Image> warped;
  std::vector<Mask> masks;
  std::vector<CameraPose> poses;
  std::vector<CameraIntrinsics> intrinsics;

  std::size_t size() const { return warped.size(); }
};

/// One point per finite-depth pixel, unprojected through the pixel center
/// and moved to world space.
RgbPointCloud lift(const RgbdFrame& frame, int stride = 1);

/// Hard z-buffered disc splatting. A point covers pixel (i, j) when the pixel
/// center lies within `radius_px` of its projection; nearest depth wins, ties
/// go to the lower point index.
WarpedView splat_render(const RgbPointCloud& cloud, const CameraPose& pose, const CameraIntrinsics& k,
                        double radius_px);

WarpedPriorChunk one_to_all(const RgbdFrame& source, const Trajectory& targets, double radius_px = 1.0);

/// Majority pooling over patch x patch cells; exact ties count as valid.
Mask downsample_mask(const Mask& mask, int patch);

void save_warped_chunk(const std::string& dir, const WarpedPriorChunk& chunk);

}  // namespace dw
