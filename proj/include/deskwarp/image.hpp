#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dw {

/// Row-major h x w x c image of doubles.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

  bool operator==(const Image&) const = default;
};

/// Binary h x w mask, one byte per pixel.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  bool operator==(const Mask&) const = default;
};

/// 8-bit PNG, values clamped to [0, 1] and rounded. 1 or 3 channels.
void write_png(const std::string& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);
Image read_png(const std::string& path);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_mask_png(const std::string& path, const Mask& mask);
Mask read_mask_png(const std::string& path);

/// Little-endian float32 payload at `path` plus a JSON header at
/// `path + ".json"` describing shape and dtype.
void write_raw_float(const std::string& path, const Image& img);
Image read_raw_float(const std::string& path);

/// Little-endian float32 encoding of a double array, used by checkpoints.
std::vector<std::uint8_t> to_float32_le(const std::vector<double>& values);
std::vector<double> from_float32_le(const std::uint8_t* bytes, std::size_t count);

}  // namespace dw
