#include "vfe/datakit/batches.hpp"

#include <numeric>

#include "vfe/datakit/png_io.hpp"
#include "vfe/datakit/random.hpp"
#include "vfe/errors.hpp"

namespace vfe::datakit {

ImageTensor PngTileSource::load(const TileRecord& record) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(record.image_path); it != cache_.end()) return it->second;
  }
  const std::filesystem::path p(record.image_path);
  auto image = read_png_rgb(p.is_absolute() ? p : root_ / p);
  std::lock_guard lock(mutex_);
  cache_.emplace(record.image_path, image);
  return image;
}

ImageTensor InMemoryTileSource::load(const TileRecord& record) const {
  auto it = images_.find(record.image_path);
  if (it == images_.end()) throw IoError("no in-memory image for " + record.image_path);
  return it->second;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, epoch));
  shuffle_in_place(order, rng);
  return order;
}

BatchIterator::BatchIterator(const Manifest& manifest, Split split, int batch_size,
                             std::uint64_t seed, std::uint64_t epoch, const TileSource& source)
    : records_(manifest.split_records(split)), batch_size_(batch_size), source_(&source) {
  if (batch_size <= 0) throw InvalidInput("batch_size must be positive");
  order_ = epoch_order(records_.size(), seed, epoch);
}

std::size_t BatchIterator::num_batches() const {
  return (records_.size() + batch_size_ - 1) / batch_size_;
}

Batch BatchIterator::batch(std::size_t k) const {
  if (k >= num_batches()) throw InvalidInput("batch index out of range");
  Batch b;
  const std::size_t begin = k * batch_size_;
  const std::size_t end = std::min(records_.size(), begin + batch_size_);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& rec = records_[order_[i]];
    auto target = source_->load(rec);
    b.crops.push_back(center_crop(target));
    b.targets.push_back(std::move(target));
    b.labels.push_back(rec.label);
  }
  return b;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= num_batches()) return std::nullopt;
  return batch(cursor_++);
}

}  // namespace vfe::datakit
