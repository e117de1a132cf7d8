#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace vfe::training {

/// Adam over named parameters. State is keyed by parameter name so that it survives model
/// growth and can be serialized next to the weights. Parameters with an undefined gradient
/// are skipped and keep their own step counter.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta0 = 0.0;
    double beta1 = 0.999;
    double eps = 1e-8;
  };

  struct Slot {
    torch::Tensor exp_avg;
    torch::Tensor exp_avg_sq;
    std::int64_t step = 0;
  };

  explicit Adam(Options options) : options_(options) {}

  void step(const std::vector<std::pair<std::string, torch::Tensor>>& params,
            const std::vector<torch::Tensor>& grads);

  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  Options options_;
  std::map<std::string, Slot> slots_;
};

/// Rescales `grads` in place so their joint L2 norm is at most max_norm. Returns the norm
/// before clipping.
double clip_grad_norm(std::vector<torch::Tensor>& grads, double max_norm);

}  // namespace vfe::training
