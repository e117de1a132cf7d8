#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vfe::datakit {

/// Planar float image (channels x height x width). Pixel data lives in [-1, 1].
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, float fill = 0.0f);

  float& at(int c, int y, int x) { return data[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data[index(c, y, x)]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
};

/// Row-major boolean raster.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

  bool operator==(const BinaryMask&) const = default;
};

/// 8-bit value to [-1, 1]: v / 127.5 - 1.
inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

/// [-1, 1] value to 8-bit: round(clamp((v + 1) * 127.5, 0, 255)).
std::uint8_t to_u8(float v);

/// Builds an image from interleaved 8-bit samples (HWC order).
ImageTensor from_interleaved_u8(std::span<const std::uint8_t> pixels, int height, int width,
                                int channels);

/// Inverse of from_interleaved_u8 using the to_u8 quantization rule.
std::vector<std::uint8_t> to_interleaved_u8(const ImageTensor& image);

/// Centered (H/2) x (W/2) window. Throws InvalidInput on odd sides.
ImageTensor center_crop(const ImageTensor& y);

}  // namespace vfe::datakit
