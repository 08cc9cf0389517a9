#pragma once

#include "deskwarp/image.hpp"

#include <string>
#include <vector>

namespace dw {

enum class Provenance { ground_truth, warped, composite, noisy, generated };

std::string to_string(Provenance p);

/// T x C x H x W latent tokens, one token per frame. Channel c of a latent
/// pixel holds image value (dy * patch + dx) * 3 + rgb of its patch.
struct LatentChunk {
  int frames = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  int patch = 1;
  Provenance provenance = Provenance::ground_truth;
  std::vector<double> data;

  LatentChunk() = default;
  LatentChunk(int t, int c, int h, int w, int s, Provenance p = Provenance::ground_truth)
      : frames(t), channels(c), height(h), width(w), patch(s), provenance(p),
        data(static_cast<std::size_t>(t) * c * h * w, 0.0) {}

  std::size_t token_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  double& at(int t, int c, int y, int x) { return data[index(t, c, y, x)]; }
  double at(int t, int c, int y, int x) const { return data[index(t, c, y, x)]; }
  std::size_t index(int t, int c, int y, int x) const {
    return ((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x;
  }
  bool same_shape(const LatentChunk& o) const {
    return frames == o.frames && channels == o.channels && height == o.height && width == o.width;
  }
};

/// Per-token binary map at latent resolution, T x H x W.
struct LatentMask {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  LatentMask() = default;
  LatentMask(int t, int h, int w, std::uint8_t fill = 0)
      : frames(t), height(h), width(w), data(static_cast<std::size_t>(t) * h * w, fill) {}

  std::uint8_t& at(int t, int y, int x) { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
  std::uint8_t at(int t, int y, int x) const { return data[(static_cast<std::size_t>(t) * height + y) * width + x]; }
  static LatentMask from_masks(const std::vector<Mask>& masks);
};

/// Lossless space-to-depth with patch size s.
LatentChunk encode(const std::vector<Image>& images, int patch);
std::vector<Image> decode(const LatentChunk& latent);

/// m * z_warp + (1 - m) * z_gt with m broadcast over channels.
LatentChunk composite(const LatentChunk& z_warp, const LatentChunk& z_gt, const LatentMask& m);

/// Frames [begin, end) of a chunk.
LatentChunk slice_frames(const LatentChunk& z, int begin, int end);

}  // namespace dw
