#include "vfe/model/convert.hpp"

#include <cstring>

#include "vfe/errors.hpp"

namespace vfe::model {

torch::Tensor to_tensor(std::span<const datakit::ImageTensor> images) {
  if (images.empty()) throw InvalidInput("cannot stack an empty image list");
  const auto& first = images.front();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width});
  auto* dst = out.data_ptr<float>();
  for (const auto& im : images) {
    if (im.channels != first.channels || im.height != first.height || im.width != first.width) {
      throw InvalidInput("images in a batch must share one shape");
    }
    std::memcpy(dst, im.data.data(), im.size() * sizeof(float));
    dst += im.size();
  }
  return out;
}

torch::Tensor to_tensor(const datakit::ImageTensor& image) {
  return to_tensor(std::span<const datakit::ImageTensor>(&image, 1));
}

std::vector<datakit::ImageTensor> to_images(const torch::Tensor& batch) {
  if (batch.dim() != 4) throw InvalidInput("expected a [N, C, H, W] tensor");
  const auto t = batch.detach().to(torch::kFloat32).contiguous();
  std::vector<datakit::ImageTensor> out;
  const auto* src = t.data_ptr<float>();
  for (std::int64_t i = 0; i < t.size(0); ++i) {
    datakit::ImageTensor im(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), static_cast<int>(t.size(3)));
    std::memcpy(im.data.data(), src, im.size() * sizeof(float));
    src += im.size();
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace vfe::model
