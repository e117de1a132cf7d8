#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vfe/datakit/batches.hpp"
#include "vfe/datakit/image.hpp"
#include "vfe/datakit/manifest.hpp"

namespace vfe::eval {

/// Maps encoder-sized crops to fixed-length codes.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  /// One row per crop.
  virtual Eigen::MatrixXf embed(std::span<const datakit::ImageTensor> crops) const = 0;
};

/// Row-major n x d codes with per-row labels (-1 = unlabeled).
struct Embeddings {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::vector<float> values;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  Eigen::MatrixXd matrix() const;
};

/// Codes of the center crops of every record in `split`, in manifest order.
Embeddings compute_embeddings(const Embedder& embedder, const datakit::Manifest& manifest,
                              datakit::Split split, const datakit::TileSource& source,
                              std::int64_t chunk = 64);

/// JSON sidecar next to an embeddings file (extension replaced by .json).
std::filesystem::path embeddings_sidecar(const std::filesystem::path& path);

/// Little-endian float32 matrix plus sidecar {n, d, labels, class_names}.
void write_embeddings(const std::filesystem::path& path, const Embeddings& e);
Embeddings read_embeddings(const std::filesystem::path& path);

/// compute_embeddings followed by write_embeddings.
Embeddings export_embeddings(const Embedder& embedder, const datakit::Manifest& manifest,
                             datakit::Split split, const datakit::TileSource& source,
                             const std::filesystem::path& path);

}  // namespace vfe::eval
