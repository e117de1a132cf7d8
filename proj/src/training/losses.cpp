#include "vfe/training/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vfe/errors.hpp"

namespace F = torch::nn::functional;

namespace vfe::training {

torch::Tensor l1_loss(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream msg;
    msg << "l1_loss: shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw InvalidInput(msg.str());
  }
  return (a - b).abs().mean();
}

torch::Tensor adv_loss_discriminator(const torch::Tensor& logits_real, const torch::Tensor& logits_fake) {
  if (logits_real.numel() == 0 || logits_fake.numel() == 0) {
    throw InvalidInput("adversarial loss needs nonempty batches");
  }
  return F::softplus(-logits_real).mean() + F::softplus(logits_fake).mean();
}

torch::Tensor adv_loss_generator(const torch::Tensor& logits_fake) {
  if (logits_fake.numel() == 0) throw InvalidInput("adversarial loss needs a nonempty batch");
  return F::softplus(-logits_fake).mean();
}

torch::Tensor downsample_target(const torch::Tensor& y, std::int64_t resolution) {
  if (y.dim() != 3 && y.dim() != 4) throw InvalidInput("downsample_target expects [C,H,W] or [N,C,H,W]");
  const auto side = y.size(-1);
  if (y.size(-2) != side) throw InvalidInput("downsample_target expects square images");
  if (resolution < 1 || side % resolution != 0) {
    throw InvalidInput("downsample_target: resolution " + std::to_string(resolution) +
                       " does not divide side " + std::to_string(side));
  }
  const auto factor = side / resolution;
  if (factor == 1) return y;
  return F::avg_pool2d(y, F::AvgPool2dFuncOptions(factor));
}

double fade_alpha(std::int64_t stage, std::int64_t step_in_stage, std::int64_t steps_in_stage,
                  double fade_fraction) {
  if (stage == 0) return 1.0;
  double ramp = fade_fraction * static_cast<double>(steps_in_stage);
  if (ramp <= 0.0) return 1.0;
  // 0.3 * 10 is 3.0000000000000004; snap so the ramp still ends on a whole step
  if (std::abs(ramp - std::round(ramp)) <= 1e-9 * ramp) ramp = std::round(ramp);
  return std::clamp(static_cast<double>(step_in_stage) / ramp, 0.0, 1.0);
}

}  // namespace vfe::training
