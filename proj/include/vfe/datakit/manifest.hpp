#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vfe::datakit {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
/// Accepts "train", "val", "test". Throws InvalidInput otherwise.
Split parse_split(std::string_view text);

struct TileRecord {
  std::string image_path;
  std::string patient_id;
  std::optional<int> label;
  Split split = Split::Train;
  double tissue_fraction = 1.0;

  bool operator==(const TileRecord&) const = default;
};

struct Manifest {
  std::vector<TileRecord> records;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  int tile_size = 0;
  int central_size = 0;

  /// Records of one split, in manifest order.
  std::vector<TileRecord> split_records(Split split) const;
  /// Throws InvalidInput when a label does not index class_names.
  void validate() const;

  bool operator==(const Manifest&) const = default;
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Patient counts per split from largest-remainder rounding of ratio * patients, with at least
/// one patient per split. Remainder ties go to the earlier split (train, val, test).
std::array<int, 3> allocate_patients(int patient_count, const SplitRatios& ratios);

/// Shuffles distinct patient ids with `seed`, allocates them with allocate_patients and
/// propagates the split to every record. Needs at least 3 distinct patients.
Manifest split_by_patient(std::vector<TileRecord> records, const SplitRatios& ratios,
                          std::uint64_t seed);

/// Global class balancing: every labeled class is downsampled (seeded) to the size of the
/// smallest labeled class. Unlabeled records are kept. Relative record order is preserved.
std::vector<TileRecord> balance_classes(const std::vector<TileRecord>& records, std::uint64_t seed);

/// Sidecar path for a manifest CSV: same stem, ".json" extension.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

void write_manifest(const Manifest& manifest, const std::filesystem::path& csv_path);
Manifest read_manifest(const std::filesystem::path& csv_path);

}  // namespace vfe::datakit
