#include "vfe/datakit/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vfe/errors.hpp"

namespace vfe::datakit {

ImageTensor::ImageTensor(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {
  if (c <= 0 || h <= 0 || w <= 0) {
    throw InvalidInput("ImageTensor dimensions must be positive");
  }
}

std::uint8_t to_u8(float v) {
  const double scaled = std::clamp((static_cast<double>(v) + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(scaled));
}

ImageTensor from_interleaved_u8(std::span<const std::uint8_t> pixels, int height, int width,
                                int channels) {
  ImageTensor out(channels, height, width);
  if (pixels.size() != out.size()) {
    throw InvalidInput("pixel buffer size does not match " + std::to_string(height) + "x" +
                       std::to_string(width) + "x" + std::to_string(channels));
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        out.at(c, y, x) = from_u8(pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]);
  return out;
}

std::vector<std::uint8_t> to_interleaved_u8(const ImageTensor& image) {
  std::vector<std::uint8_t> out(image.size());
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        out[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
            to_u8(image.at(c, y, x));
  return out;
}

ImageTensor center_crop(const ImageTensor& y) {
  if (y.height <= 0 || y.width <= 0 || y.height % 2 != 0 || y.width % 2 != 0) {
    throw InvalidInput("center_crop needs even, positive sides; got " + std::to_string(y.height) +
                       "x" + std::to_string(y.width));
  }
  const int h = y.height / 2;
  const int w = y.width / 2;
  // Sides of 2 mod 4 leave an odd margin; the extra row/column goes to the bottom/right.
  const int row0 = (y.height - h) / 2;
  const int col0 = (y.width - w) / 2;
  ImageTensor out(y.channels, h, w);
  for (int c = 0; c < y.channels; ++c)
    for (int r = 0; r < h; ++r)
      for (int q = 0; q < w; ++q) out.at(c, r, q) = y.at(c, row0 + r, col0 + q);
  return out;
}

}  // namespace vfe::datakit
