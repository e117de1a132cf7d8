#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vfe/datakit/batches.hpp"
#include "vfe/datakit/image.hpp"
#include "vfe/datakit/manifest.hpp"

namespace vfe::datakit {

/// Procedural two-class texture corpus of stain-coloured square-wave stripes at a random
/// orientation. Class 0 ("fine") has periods of 5-7 px, class 1 ("coarse") 8.5-11 px. The
/// pattern is periodic, so the area around the centre crop is predictable from the crop.
/// Pixels are quantized to 8 bits like PNG tiles.
struct SyntheticOptions {
  int tile_size = 32;
  int tiles = 500;
  int patients = 25;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

inline const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names{"fine", "coarse"};
  return names;
}

ImageTensor synthetic_tile(int label, int size, std::uint64_t seed);

struct SyntheticCorpus {
  Manifest manifest;
  InMemoryTileSource source;
};

/// Balanced labels, tiles spread evenly over patients, split patient-wise. Record paths have
/// the layout <class>/<patient>/<index>.png.
SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

/// Writes the corpus as PNGs under `dir` in the <class>/<patient>/ layout.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace vfe::datakit
