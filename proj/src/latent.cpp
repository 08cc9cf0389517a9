#include "deskwarp/latent.hpp"

#include <algorithm>
#include <stdexcept>

namespace dw {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::ground_truth: return "ground-truth";
    case Provenance::warped: return "warped";
    case Provenance::composite: return "composite";
    case Provenance::noisy: return "noisy";
    case Provenance::generated: return "generated";
  }
  return "unknown";
}

LatentMask LatentMask::from_masks(const std::vector<Mask>& masks) {
  if (masks.empty()) return {};
  LatentMask m(static_cast<int>(masks.size()), masks[0].height, masks[0].width);
  for (std::size_t t = 0; t < masks.size(); ++t) {
    if (masks[t].width != m.width || masks[t].height != m.height)
      throw std::domain_error("LatentMask: masks differ in size");
    std::copy(masks[t].data.begin(), masks[t].data.end(), m.data.begin() + t * masks[t].data.size());
  }
  return m;
}

LatentChunk encode(const std::vector<Image>& images, int patch) {
  if (images.empty()) throw std::domain_error("encode: no images");
  const Image& first = images[0];
  if (patch < 1 || first.width % patch != 0 || first.height % patch != 0)
    throw std::domain_error("encode: patch size must divide the image size");
  if (first.channels != 3) throw std::domain_error("encode: expected RGB images");
  const int t_count = static_cast<int>(images.size());
  LatentChunk z(t_count, 3 * patch * patch, first.height / patch, first.width / patch, patch);
  for (int t = 0; t < t_count; ++t) {
    const Image& img = images[t];
    if (!img.same_shape(first)) throw std::domain_error("encode: images differ in shape");
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            for (int c = 0; c < 3; ++c)
              z.at(t, (dy * patch + dx) * 3 + c, y, x) = img.at(x * patch + dx, y * patch + dy, c);
  }
  return z;
}

std::vector<Image> decode(const LatentChunk& z) {
  const int s = z.patch;
  if (s < 1 || z.channels != 3 * s * s) throw std::domain_error("decode: channel count does not match patch size");
  if (z.data.size() != static_cast<std::size_t>(z.frames) * z.token_size())
    throw std::domain_error("decode: data size does not match shape");
  std::vector<Image> out;
  out.reserve(z.frames);
  for (int t = 0; t < z.frames; ++t) {
    Image img(z.width * s, z.height * s, 3);
    for (int y = 0; y < z.height; ++y)
      for (int x = 0; x < z.width; ++x)
        for (int dy = 0; dy < s; ++dy)
          for (int dx = 0; dx < s; ++dx)
            for (int c = 0; c < 3; ++c) img.at(x * s + dx, y * s + dy, c) = z.at(t, (dy * s + dx) * 3 + c, y, x);
    out.push_back(std::move(img));
  }
  return out;
}

LatentChunk composite(const LatentChunk& z_warp, const LatentChunk& z_gt, const LatentMask& m) {
  if (!z_warp.same_shape(z_gt)) throw std::domain_error("composite: latent shapes differ");
  if (m.frames != z_gt.frames || m.height != z_gt.height || m.width != z_gt.width)
    throw std::domain_error("composite: mask shape does not match latents");
  LatentChunk out = z_gt;
  out.provenance = Provenance::composite;
  for (int t = 0; t < out.frames; ++t)
    for (int c = 0; c < out.channels; ++c)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
          const double mv = m.at(t, y, x) ? 1.0 : 0.0;
          out.at(t, c, y, x) = mv * z_warp.at(t, c, y, x) + (1.0 - mv) * z_gt.at(t, c, y, x);
        }
  return out;
}

LatentChunk slice_frames(const LatentChunk& z, int begin, int end) {
  if (begin < 0 || end > z.frames || begin > end) throw std::domain_error("slice_frames: bad range");
  LatentChunk out(end - begin, z.channels, z.height, z.width, z.patch, z.provenance);
  std::copy(z.data.begin() + begin * z.token_size(), z.data.begin() + end * z.token_size(), out.data.begin());
  return out;
}

}  // namespace dw
