#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vfe/datakit/image.hpp"
#include "vfe/datakit/manifest.hpp"

namespace vfe::datakit {

/// Resolves a manifest record to pixels.
class TileSource {
 public:
  virtual ~TileSource() = default;
  virtual ImageTensor load(const TileRecord& record) const = 0;
};

/// PNG files addressed relative to `root` (absolute record paths are used as is). Decoded
/// tiles are cached; safe to share between threads.
class PngTileSource final : public TileSource {
 public:
  explicit PngTileSource(std::filesystem::path root) : root_(std::move(root)) {}
  ImageTensor load(const TileRecord& record) const override;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, ImageTensor> cache_;
};

/// Images keyed by image_path.
class InMemoryTileSource final : public TileSource {
 public:
  void add(std::string path, ImageTensor image) { images_[std::move(path)] = std::move(image); }
  ImageTensor load(const TileRecord& record) const override;

 private:
  std::map<std::string, ImageTensor> images_;
};

struct Batch {
  std::vector<ImageTensor> targets;
  std::vector<ImageTensor> crops;
  std::vector<std::optional<int>> labels;

  std::size_t size() const { return targets.size(); }
};

/// Permutation of [0, n) for one epoch; a pure function of (n, seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Mini-batches over one split for one epoch. The last batch may be short; an empty split
/// yields no batches. crops[i] is always center_crop(targets[i]).
class BatchIterator {
 public:
  BatchIterator(const Manifest& manifest, Split split, int batch_size, std::uint64_t seed,
                std::uint64_t epoch, const TileSource& source);

  std::size_t num_batches() const;
  std::size_t num_records() const { return records_.size(); }
  /// Random access to batch k of this epoch.
  Batch batch(std::size_t k) const;
  /// Sequential access; std::nullopt after the last batch.
  std::optional<Batch> next();

 private:
  std::vector<TileRecord> records_;
  std::vector<std::size_t> order_;
  int batch_size_;
  const TileSource* source_;
  std::size_t cursor_ = 0;
};

}  // namespace vfe::datakit
