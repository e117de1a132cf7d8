#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vfe/datakit/batches.hpp"
#include "vfe/datakit/image.hpp"
#include "vfe/datakit/manifest.hpp"
#include "vfe/eval/frechet.hpp"

namespace vfe::eval {

/// Image -> feature vector map used for Frechet statistics.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  /// One row per image.
  virtual Eigen::MatrixXd extract(std::span<const datakit::ImageTensor> images) const = 0;
};

/// Per-channel pixel means.
class PixelMeanExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "pixel_mean"; }
  Eigen::MatrixXd extract(std::span<const datakit::ImageTensor> images) const override;
};

/// Per channel: mean, standard deviation, mean absolute horizontal and vertical differences,
/// and the means of the four quadrants. Needs no trained weights.
class ChannelStatsExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "channel_stats"; }
  Eigen::MatrixXd extract(std::span<const datakit::ImageTensor> images) const override;
};

/// Source of generated images.
class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  /// Decodes n prior draws keyed by seed.
  virtual std::vector<datakit::ImageTensor> sample(std::int64_t n, std::uint64_t seed) const = 0;
  /// Expands the center crop of every target to the output resolution.
  virtual std::vector<datakit::ImageTensor> expand(
      std::span<const datakit::ImageTensor> targets) const = 0;
};

/// Features of a list of images, extracted in chunks.
Eigen::MatrixXd extract_features(const FeatureExtractor& extractor,
                                 std::span<const datakit::ImageTensor> images,
                                 std::int64_t chunk = 64);

/// All images of one split, in manifest order.
std::vector<datakit::ImageTensor> load_split(const datakit::Manifest& manifest, datakit::Split split,
                                             const datakit::TileSource& source);

double fid_between(const FeatureExtractor& extractor, std::span<const datakit::ImageTensor> a,
                   std::span<const datakit::ImageTensor> b);

struct FidOptions {
  /// Split providing the real-image statistics.
  datakit::Split real_split = datakit::Split::Train;
  /// Split whose tiles are expanded in expanded mode.
  datakit::Split eval_split = datakit::Split::Test;
};

/// Frechet distance between n decoded prior samples and the real split.
double fid_sampled(const ImageGenerator& generator, const FeatureExtractor& extractor,
                   const datakit::Manifest& manifest, const datakit::TileSource& source,
                   std::int64_t n, std::uint64_t seed, const FidOptions& options = {});

/// Frechet distance between expansions of every eval-split tile and the real split.
double fid_expanded(const ImageGenerator& generator, const FeatureExtractor& extractor,
                    const datakit::Manifest& manifest, const datakit::TileSource& source,
                    const FidOptions& options = {});

}  // namespace vfe::eval
