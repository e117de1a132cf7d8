#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "vfe/model/config.hpp"

namespace vfe::model {

/// Two 3x3 convolutions with an identity (or 1x1 projection) shortcut; no normalization.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(std::int64_t in_channels, std::int64_t out_channels, std::int64_t stride,
                    std::uint64_t seed);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Residual backbone (stem + 4 blocks) followed by a convolutional and a fully connected
/// projection head. The latent output is unbounded.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& config);
  /// x: [N, 3, input_size, input_size] -> [N, latent_dim].
  torch::Tensor forward(const torch::Tensor& x);
  /// Sub-module for a group suffix: "stem", "block1".."block4", "head".
  std::vector<torch::Tensor> group_parameters(const std::string& group) const;

 private:
  ModelConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  std::vector<ResidualBlock> blocks_;
  torch::nn::Conv2d head_conv_{nullptr};
  torch::nn::Linear head_fc_{nullptr};
};
TORCH_MODULE(Encoder);

/// Progressive decoder: linear deprojection onto a base_resolution grid, then one upsampling
/// block per grown stage with a tanh toRGB head each.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);
  /// Adds the next stage's block and toRGB head. Existing weights are untouched.
  void grow();
  std::int64_t grown_stages() const { return static_cast<std::int64_t>(to_rgb_.size()); }
  /// z: [N, latent_dim] -> [N, 3, r, r] with r = resolution(state.stage), values in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z, const GrowthState& state);

 private:
  torch::Tensor features(const torch::Tensor& z, std::int64_t stage, torch::Tensor* previous);

  ModelConfig config_;
  torch::nn::Linear deprojection_{nullptr};
  torch::nn::Conv2d base_conv_{nullptr};
  std::vector<std::pair<torch::nn::Conv2d, torch::nn::Conv2d>> blocks_;  // stage >= 1
  std::vector<torch::nn::Conv2d> to_rgb_;
};
TORCH_MODULE(Decoder);

/// Fully connected discriminator on latent codes; returns one logit per row.
class LatentDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit LatentDiscriminatorImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& z);

 private:
  std::int64_t latent_dim_;
  std::vector<torch::nn::Linear> layers_;
};
TORCH_MODULE(LatentDiscriminator);

/// Mirror of the decoder: fromRGB head per stage, downsampling blocks, scalar logit.
class ImageDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ImageDiscriminatorImpl(const ModelConfig& config);
  void grow();
  std::int64_t grown_stages() const { return static_cast<std::int64_t>(from_rgb_.size()); }
  /// y: [N, 3, r, r] with r = resolution(state.stage) -> [N] logits.
  torch::Tensor forward(const torch::Tensor& y, const GrowthState& state);

 private:
  ModelConfig config_;
  std::vector<torch::nn::Conv2d> from_rgb_;
  std::vector<std::pair<torch::nn::Conv2d, torch::nn::Conv2d>> blocks_;  // stage >= 1
  torch::nn::Conv2d final_conv_{nullptr};
  torch::nn::Linear final_fc_{nullptr};
};
TORCH_MODULE(ImageDiscriminator);

/// The four networks of the visual-field-expansion model, grown in lockstep.
class Outpainter {
 public:
  explicit Outpainter(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::int64_t grown_stages() const { return decoder->grown_stages(); }
  /// Grows decoder and image discriminator until `stage` exists.
  void grow_to(std::int64_t stage);

  /// Parameters keyed "encoder/...", "decoder/...", "latent_disc/...", "image_disc/...".
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
  std::vector<torch::Tensor> group_parameters(const std::string& group) const;
  std::int64_t parameter_count() const;

  /// Toggles requires_grad according to the freeze policy for `epoch`.
  void set_trainable(const FreezePolicy& policy, std::int64_t epoch);
  /// Groups whose parameters currently all require gradients.
  std::set<std::string> trainable_groups() const;

  /// Deep copy with independent weights.
  Outpainter clone() const;

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  LatentDiscriminator latent_disc{nullptr};
  ImageDiscriminator image_disc{nullptr};

 private:
  ModelConfig config_;
};

/// n draws from N(0, I_latent_dim), deterministic per seed. Throws InvalidInput for n < 1.
torch::Tensor sample_latent(std::int64_t n, std::int64_t latent_dim, std::uint64_t seed);

/// All parameter group names in a fixed order.
const std::vector<std::string>& all_groups();

}  // namespace vfe::model
