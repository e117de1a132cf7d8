#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace vfe::model {

/// Architecture hyper-parameters shared by the four networks.
struct ModelConfig {
  /// Side of the square crop the encoder sees.
  std::int64_t input_size = 112;
  std::int64_t latent_dim = 512;
  /// Output widths of the four residual backbone blocks.
  std::vector<std::int64_t> encoder_widths{64, 128, 256, 512};
  /// Spatial reduction of the stem: 1 (stride-1 conv), 2 (stride-2 conv) or 4 (stride-2 conv
  /// followed by 3x3/2 max pooling).
  std::int64_t stem_downsample = 4;
  std::int64_t base_resolution = 7;
  /// Number of resolutions, base_resolution * 2^s for s in [0, num_stages).
  std::int64_t num_stages = 6;
  /// Feature channels of the decoder at each stage.
  std::vector<std::int64_t> decoder_channels{512, 512, 256, 128, 64, 32};
  /// Feature channels of the image discriminator at each stage.
  std::vector<std::int64_t> image_disc_channels{512, 512, 256, 128, 64, 32};
  std::int64_t latent_disc_width = 256;
  std::int64_t latent_disc_hidden_layers = 3;
  std::uint64_t init_seed = 0;

  std::int64_t resolution(std::int64_t stage) const { return base_resolution << stage; }
  std::int64_t output_size() const { return resolution(num_stages - 1); }

  /// Throws InvalidInput on inconsistent sizes.
  void validate() const;
};

/// Progress through the stage schedule. alpha blends the newest stage in.
struct GrowthState {
  std::int64_t stage = 0;
  double alpha = 1.0;

  bool operator==(const GrowthState&) const = default;
};

/// Which encoder backbone blocks receive gradients.
struct FreezePolicy {
  /// Epochs during which the whole backbone (stem and all blocks) is locked.
  std::int64_t lock_all_epochs = 1;
  /// Leading backbone blocks kept frozen afterwards (the stem goes with them when > 0).
  std::int64_t frozen_blocks = 3;
};

/// Parameter group names: "encoder.stem", "encoder.block1".."encoder.block4", "encoder.head",
/// "decoder", "latent_disc", "image_disc".
std::set<std::string> trainable_groups(const FreezePolicy& policy, std::int64_t epoch);

}  // namespace vfe::model
