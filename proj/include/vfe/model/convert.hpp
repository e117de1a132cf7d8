#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "vfe/datakit/image.hpp"

namespace vfe::model {

/// Stacks same-sized images into a float32 [N, C, H, W] tensor.
torch::Tensor to_tensor(std::span<const datakit::ImageTensor> images);
torch::Tensor to_tensor(const datakit::ImageTensor& image);

/// Splits a [N, C, H, W] tensor into images.
std::vector<datakit::ImageTensor> to_images(const torch::Tensor& batch);

}  // namespace vfe::model
