#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vfe/datakit/image.hpp"

namespace vfe::datakit {

using Histogram256 = std::array<std::uint64_t, 256>;

/// Otsu's threshold: the t maximizing between-class variance of {v <= t} vs {v > t}.
/// Ties resolve to the smallest t. A histogram with a single occupied bin returns that bin.
/// Throws InvalidInput on an all-zero histogram.
int otsu_threshold(const Histogram256& histogram);

/// HSV saturation (max - min) / max quantized to 8 bits, row-major, from an RGB image in [-1, 1].
/// The RGB samples are first re-quantized to 8 bits so that the result matches an 8-bit pipeline.
std::vector<std::uint8_t> saturation_u8(const ImageTensor& rgb);

Histogram256 histogram_u8(const std::vector<std::uint8_t>& values);

/// Pixels with saturation strictly above `threshold`.
BinaryMask threshold_mask(const std::vector<std::uint8_t>& saturation, int height, int width,
                          int threshold);

/// Tissue mask: saturation > otsu_threshold(histogram of saturation).
BinaryMask compute_tissue_mask(const ImageTensor& rgb);

struct GridWindow {
  int row = 0;
  int col = 0;
  double tissue_fraction = 0.0;
};

/// Regular grid of tile_size windows with the given stride, row-major, with the fraction of
/// true mask pixels in each window. Empty when the tile does not fit.
std::vector<GridWindow> grid_tiles(const BinaryMask& mask, int tile_size, int stride);

/// Fraction of true pixels in the whole mask.
double mask_fraction(const BinaryMask& mask);

/// True iff any pixel of the centered central_size window is set. The mask must be square and
/// (tile - central) even.
bool label_tile(const BinaryMask& tumor_mask, int central_size);

/// Minimum tissue fraction a tile must have to be kept.
inline constexpr double kMinTissueFraction = 0.5;

}  // namespace vfe::datakit
