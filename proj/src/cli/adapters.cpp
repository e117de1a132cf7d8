#include "vfe/cli/adapters.hpp"

#include <algorithm>

#include "vfe/errors.hpp"
#include "vfe/model/convert.hpp"
#include "vfe/training/losses.hpp"

namespace vfe::cli {

using datakit::ImageTensor;

namespace {

torch::Tensor encode_chunked(model::Encoder& encoder, std::span<const ImageTensor> images,
                             std::int64_t chunk, std::int64_t input_size) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  const auto n = static_cast<std::int64_t>(images.size());
  for (std::int64_t start = 0; start < n; start += chunk) {
    const auto stop = std::min(n, start + chunk);
    auto x = model::to_tensor(images.subspan(start, stop - start));
    if (input_size > 0 && x.size(-1) != input_size) x = training::downsample_target(x, input_size);
    parts.push_back(encoder->forward(x));
  }
  return torch::cat(parts, 0);
}

}  // namespace

Eigen::MatrixXf EncoderEmbedder::embed(std::span<const ImageTensor> crops) const {
  if (crops.empty()) return Eigen::MatrixXf(0, latent_dim_);
  auto encoder = encoder_;
  const auto codes = encode_chunked(encoder, crops, chunk_, 0).contiguous();
  Eigen::MatrixXf out(codes.size(0), codes.size(1));
  const auto acc = codes.accessor<float, 2>();
  for (std::int64_t i = 0; i < codes.size(0); ++i)
    for (std::int64_t j = 0; j < codes.size(1); ++j) out(i, j) = acc[i][j];
  return out;
}

Eigen::MatrixXd EncoderFeatureExtractor::extract(std::span<const ImageTensor> images) const {
  if (images.empty()) return {};
  for (const auto& im : images) {
    if (im.height != im.width || im.height < input_size_ || im.height % input_size_ != 0) {
      throw InvalidInput("encoder features need square images whose side is a multiple of " +
                         std::to_string(input_size_));
    }
  }
  auto encoder = encoder_;
  const auto codes = encode_chunked(encoder, images, 64, input_size_).to(torch::kFloat64).contiguous();
  Eigen::MatrixXd out(codes.size(0), codes.size(1));
  const auto acc = codes.accessor<double, 2>();
  for (std::int64_t i = 0; i < codes.size(0); ++i)
    for (std::int64_t j = 0; j < codes.size(1); ++j) out(i, j) = acc[i][j];
  return out;
}

std::vector<ImageTensor> OutpainterGenerator::sample(std::int64_t n, std::uint64_t seed) const {
  torch::NoGradGuard no_grad;
  const auto z = model::sample_latent(n, model_.config().latent_dim, seed);
  std::vector<ImageTensor> out;
  out.reserve(n);
  auto decoder = model_.decoder;
  for (std::int64_t start = 0; start < n; start += chunk_) {
    const auto stop = std::min(n, start + chunk_);
    auto images = model::to_images(decoder->forward(z.slice(0, start, stop), state_));
    std::move(images.begin(), images.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<ImageTensor> OutpainterGenerator::expand_crops(std::span<const ImageTensor> crops) const {
  torch::NoGradGuard no_grad;
  const auto input = model_.config().input_size;
  for (const auto& c : crops) {
    if (c.height != input || c.width != input) {
      throw InvalidInput("expected a " + std::to_string(input) + "x" + std::to_string(input) +
                         " input, got " + std::to_string(c.width) + "x" + std::to_string(c.height));
    }
  }
  std::vector<ImageTensor> out;
  out.reserve(crops.size());
  auto encoder = model_.encoder;
  auto decoder = model_.decoder;
  const auto n = static_cast<std::int64_t>(crops.size());
  for (std::int64_t start = 0; start < n; start += chunk_) {
    const auto stop = std::min(n, start + chunk_);
    const auto z = encoder->forward(model::to_tensor(crops.subspan(start, stop - start)));
    auto images = model::to_images(decoder->forward(z, state_));
    std::move(images.begin(), images.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<ImageTensor> OutpainterGenerator::expand(std::span<const ImageTensor> targets) const {
  std::vector<ImageTensor> crops;
  crops.reserve(targets.size());
  for (const auto& t : targets) crops.push_back(datakit::center_crop(t));
  return expand_crops(crops);
}

}  // namespace vfe::cli
