#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "vfe/model/config.hpp"

namespace vfe::training {

inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Everything needed to resume a run bit-for-bit.
///
/// On disk: the 7-byte magic "VFECKPT", one format-version byte, a little-endian u64 header
/// length, the JSON header, then raw little-endian float32 blobs. The header indexes every
/// blob as {name, offset, shape} with offsets relative to the start of the blob section.
struct Checkpoint {
  std::uint8_t format_version = kCheckpointVersion;
  std::string config_hash;
  nlohmann::json config;
  std::int64_t step = 0;
  model::GrowthState growth;
  std::int64_t grown_stages = 1;
  /// Model parameters ("param/...") and optimizer moments ("adam/<opt>/<param>/m|v").
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  /// {"<opt>": {"<param>": step}}.
  nlohmann::json optimizer_steps = nlohmann::json::object();

  const torch::Tensor* find(const std::string& name) const;
};

/// Writes to a temporary file in the same directory and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws IncompatibleCheckpoint on a magic or version mismatch, IoError on truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vfe::training
