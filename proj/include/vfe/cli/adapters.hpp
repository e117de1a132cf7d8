#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vfe/eval/embeddings.hpp"
#include "vfe/eval/fid.hpp"
#include "vfe/model/networks.hpp"

namespace vfe::cli {

/// Latent codes of the encoder as probe features.
class EncoderEmbedder final : public eval::Embedder {
 public:
  EncoderEmbedder(model::Encoder encoder, std::int64_t latent_dim, std::int64_t chunk = 64)
      : encoder_(std::move(encoder)), latent_dim_(latent_dim), chunk_(chunk) {}
  int dim() const override { return static_cast<int>(latent_dim_); }
  Eigen::MatrixXf embed(std::span<const datakit::ImageTensor> crops) const override;

 private:
  model::Encoder encoder_;
  std::int64_t latent_dim_;
  std::int64_t chunk_;
};

/// Frechet features from the frozen encoder. Images larger than the encoder input are
/// area-averaged down to it first.
class EncoderFeatureExtractor final : public eval::FeatureExtractor {
 public:
  EncoderFeatureExtractor(model::Encoder encoder, std::int64_t input_size)
      : encoder_(std::move(encoder)), input_size_(input_size) {}
  std::string name() const override { return "encoder"; }
  Eigen::MatrixXd extract(std::span<const datakit::ImageTensor> images) const override;

 private:
  model::Encoder encoder_;
  std::int64_t input_size_;
};

/// Decoder samples and full-model expansions at a fixed growth state.
class OutpainterGenerator final : public eval::ImageGenerator {
 public:
  OutpainterGenerator(const model::Outpainter& model, model::GrowthState state, std::int64_t chunk = 64)
      : model_(model), state_(state), chunk_(chunk) {}
  std::vector<datakit::ImageTensor> sample(std::int64_t n, std::uint64_t seed) const override;
  std::vector<datakit::ImageTensor> expand(std::span<const datakit::ImageTensor> targets) const override;
  /// dec(enc(crop)) for encoder-sized crops.
  std::vector<datakit::ImageTensor> expand_crops(std::span<const datakit::ImageTensor> crops) const;

 private:
  const model::Outpainter& model_;
  model::GrowthState state_;
  std::int64_t chunk_;
};

}  // namespace vfe::cli
