#include "vfe/datakit/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vfe/errors.hpp"

namespace vfe::datakit {

int otsu_threshold(const Histogram256& histogram) {
  double total = 0.0;
  double weighted_total = 0.0;
  int occupied = 0;
  int last_occupied = 0;
  for (int v = 0; v < 256; ++v) {
    const double n = static_cast<double>(histogram[v]);
    total += n;
    weighted_total += n * v;
    if (histogram[v] != 0) {
      ++occupied;
      last_occupied = v;
    }
  }
  if (occupied == 0) throw InvalidInput("otsu_threshold: histogram is empty");
  if (occupied == 1) return last_occupied;

  int best_t = 0;
  double best_var = -1.0;
  double below = 0.0;
  double weighted_below = 0.0;
  for (int t = 0; t < 256; ++t) {
    below += static_cast<double>(histogram[t]);
    weighted_below += static_cast<double>(histogram[t]) * t;
    const double above = total - below;
    double var = 0.0;
    if (below > 0.0 && above > 0.0) {
      const double mean_below = weighted_below / below;
      const double mean_above = (weighted_total - weighted_below) / above;
      const double diff = mean_below - mean_above;
      var = below * above * diff * diff;
    }
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<std::uint8_t> saturation_u8(const ImageTensor& rgb) {
  if (rgb.channels != 3) {
    throw InvalidInput("tissue mask needs a 3-channel image, got " + std::to_string(rgb.channels));
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(rgb.height) * rgb.width);
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const int r = to_u8(rgb.at(0, y, x));
      const int g = to_u8(rgb.at(1, y, x));
      const int b = to_u8(rgb.at(2, y, x));
      const int hi = std::max({r, g, b});
      const int lo = std::min({r, g, b});
      const double s = hi == 0 ? 0.0 : static_cast<double>(hi - lo) / hi;
      out[static_cast<std::size_t>(y) * rgb.width + x] =
          static_cast<std::uint8_t>(std::lround(s * 255.0));
    }
  }
  return out;
}

Histogram256 histogram_u8(const std::vector<std::uint8_t>& values) {
  Histogram256 h{};
  for (const auto v : values) ++h[v];
  return h;
}

BinaryMask threshold_mask(const std::vector<std::uint8_t>& saturation, int height, int width,
                          int threshold) {
  BinaryMask mask(height, width);
  for (std::size_t i = 0; i < saturation.size(); ++i) mask.data[i] = saturation[i] > threshold;
  return mask;
}

BinaryMask compute_tissue_mask(const ImageTensor& rgb) {
  const auto sat = saturation_u8(rgb);
  return threshold_mask(sat, rgb.height, rgb.width, otsu_threshold(histogram_u8(sat)));
}

std::vector<GridWindow> grid_tiles(const BinaryMask& mask, int tile_size, int stride) {
  if (tile_size <= 0 || stride <= 0) throw InvalidInput("grid_tiles: tile_size and stride must be >= 1");
  std::vector<GridWindow> windows;
  if (tile_size > mask.height || tile_size > mask.width) return windows;

  // Summed-area table with a zero border.
  const int w1 = mask.width + 1;
  std::vector<std::int64_t> integral(static_cast<std::size_t>(mask.height + 1) * w1, 0);
  for (int y = 0; y < mask.height; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < mask.width; ++x) {
      row += mask.at(y, x) ? 1 : 0;
      integral[static_cast<std::size_t>(y + 1) * w1 + x + 1] =
          integral[static_cast<std::size_t>(y) * w1 + x + 1] + row;
    }
  }
  auto at = [&](int y, int x) { return integral[static_cast<std::size_t>(y) * w1 + x]; };
  const double area = static_cast<double>(tile_size) * tile_size;
  for (int r = 0; r + tile_size <= mask.height; r += stride) {
    for (int c = 0; c + tile_size <= mask.width; c += stride) {
      const auto count = at(r + tile_size, c + tile_size) - at(r, c + tile_size) -
                         at(r + tile_size, c) + at(r, c);
      windows.push_back({r, c, static_cast<double>(count) / area});
    }
  }
  return windows;
}

double mask_fraction(const BinaryMask& mask) {
  if (mask.data.empty()) return 0.0;
  const auto n = std::count_if(mask.data.begin(), mask.data.end(), [](auto v) { return v != 0; });
  return static_cast<double>(n) / static_cast<double>(mask.data.size());
}

bool label_tile(const BinaryMask& tumor_mask, int central_size) {
  const int tile = tumor_mask.height;
  if (tumor_mask.width != tile) throw InvalidInput("label_tile: mask must be square");
  if (central_size <= 0 || central_size > tile) {
    throw InvalidInput("label_tile: central_size must be in [1, tile_size]");
  }
  if ((tile - central_size) % 2 != 0) {
    throw InvalidInput("label_tile: tile_size " + std::to_string(tile) + " and central_size " +
                       std::to_string(central_size) + " differ in parity");
  }
  const int off = (tile - central_size) / 2;
  for (int y = off; y < off + central_size; ++y)
    for (int x = off; x < off + central_size; ++x)
      if (tumor_mask.at(y, x)) return true;
  return false;
}

}  // namespace vfe::datakit
