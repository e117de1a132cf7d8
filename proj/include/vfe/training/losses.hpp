#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace vfe::training {

/// Mean absolute difference over all elements. Shapes must match.
torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b);

/// Discriminator cross-entropy with logits: mean(softplus(-real)) + mean(softplus(fake)).
torch::Tensor adv_loss_discriminator(const torch::Tensor& logits_real, const torch::Tensor& logits_fake);

/// Non-saturating generator loss: mean(softplus(-fake)).
torch::Tensor adv_loss_generator(const torch::Tensor& logits_fake);

/// Area-average pooling of a square image (or [N, C, S, S] batch) down to `resolution`.
/// `resolution` must divide the side length.
torch::Tensor downsample_target(const torch::Tensor& y, std::int64_t resolution);

/// Linear fade-in weight of the newest stage: min(1, step / (fade_fraction * steps)).
/// Stage 0 has nothing to fade from and always returns 1.
double fade_alpha(std::int64_t stage, std::int64_t step_in_stage, std::int64_t steps_in_stage,
                  double fade_fraction);

}  // namespace vfe::training
