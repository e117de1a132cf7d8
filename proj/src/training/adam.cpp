#include "vfe/training/adam.hpp"

#include <cmath>

#include "vfe/errors.hpp"

namespace vfe::training {

void Adam::step(const std::vector<std::pair<std::string, torch::Tensor>>& params,
                const std::vector<torch::Tensor>& grads) {
  if (params.size() != grads.size()) throw InvalidInput("Adam::step: params/grads size mismatch");
  torch::NoGradGuard no_grad;
  const double b0 = options_.beta0;
  const double b1 = options_.beta1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& grad = grads[i];
    if (!grad.defined()) continue;
    auto param = params[i].second;
    auto& slot = slots_[params[i].first];
    if (!slot.exp_avg.defined()) {
      slot.exp_avg = torch::zeros_like(param);
      slot.exp_avg_sq = torch::zeros_like(param);
    }
    ++slot.step;
    slot.exp_avg.mul_(b0).add_(grad, 1.0 - b0);
    slot.exp_avg_sq.mul_(b1).addcmul_(grad, grad, 1.0 - b1);
    const double bias1 = 1.0 - std::pow(b0, static_cast<double>(slot.step));
    const double bias2 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
    const auto denom = (slot.exp_avg_sq.sqrt() / std::sqrt(bias2)).add_(options_.eps);
    param.addcdiv_(slot.exp_avg, denom, -options_.learning_rate / bias1);
  }
}

double clip_grad_norm(std::vector<torch::Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    if (g.defined()) sq += g.to(torch::kFloat64).pow(2).sum().item<double>();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-12);
    for (auto& g : grads)
      if (g.defined()) g = g * scale;
  }
  return norm;
}

}  // namespace vfe::training
