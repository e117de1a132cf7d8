#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "vfe/datakit/manifest.hpp"

namespace vfe::datakit {

/// Which tiles share one saturation histogram when choosing the Otsu threshold.
enum class ThresholdScope { Tile, Patient, Global };

ThresholdScope parse_threshold_scope(std::string_view text);

struct PrepareOptions {
  std::filesystem::path tile_dir;
  /// Optional tumor annotation masks mirroring tile_dir's relative layout.
  std::optional<std::filesystem::path> mask_dir;
  /// Tiles are laid out as tile_dir/<class>/<patient>/*.png instead of tile_dir/<patient>/*.png.
  bool class_dirs = false;
  /// Central window for the mask labeling rule; 0 picks the 86/224 proportion of the tile side.
  int central_size = 0;
  ThresholdScope threshold_scope = ThresholdScope::Patient;
  /// Downsample every class to the smallest class before splitting.
  bool balance = false;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

struct PrepareResult {
  Manifest manifest;
  std::size_t scanned = 0;
  std::size_t unreadable = 0;
  std::size_t discarded_background = 0;
};

/// Central window size proportional to 86 px of 224 px, with the parity of `tile_size`.
int default_central_size(int tile_size);

/// Scans tiles, measures tissue, applies the background discard rule, labels, splits
/// patient-wise. Record paths are relative to `relative_to`. Throws InvalidInput when no tile
/// survives.
PrepareResult prepare_manifest(const PrepareOptions& options,
                               const std::filesystem::path& relative_to);

}  // namespace vfe::datakit
