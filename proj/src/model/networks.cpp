#include "vfe/model/networks.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "vfe/datakit/random.hpp"
#include "vfe/errors.hpp"
#include "vfe/hash.hpp"

namespace F = torch::nn::functional;

namespace vfe::model {

namespace {

constexpr double kLeakySlope = 0.2;
const double kReluGain = std::sqrt(2.0);

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

std::uint64_t layer_seed(std::uint64_t seed, const std::string& name) {
  return datakit::derive_seed(seed, fnv1a64(name));
}

// Fan-in scaled normal weights, zero bias.
void init_params(torch::nn::Module& layer, std::uint64_t seed, double gain) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  for (auto& p : layer.named_parameters(false)) {
    auto& t = p.value();
    if (p.key() == "weight") {
      const double fan_in = static_cast<double>(t.numel() / t.size(0));
      t.normal_(0.0, gain / std::sqrt(fan_in), gen);
    } else {
      t.zero_();
    }
  }
}

torch::nn::Conv2d make_conv(std::int64_t in, std::int64_t out, std::int64_t kernel,
                            std::int64_t stride, std::uint64_t seed, double gain) {
  torch::nn::Conv2d conv(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
  init_params(*conv, seed, gain);
  return conv;
}

torch::nn::Linear make_linear(std::int64_t in, std::int64_t out, std::uint64_t seed, double gain) {
  torch::nn::Linear fc(in, out);
  init_params(*fc, seed, gain);
  return fc;
}

std::vector<torch::Tensor> params_of(const torch::nn::Module& m) { return m.parameters(true); }

void append(std::vector<torch::Tensor>& out, const std::vector<torch::Tensor>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Configuration helpers

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidInput("model config: " + what); };
  if (input_size < 1) fail("input_size must be positive");
  if (latent_dim < 1) fail("latent_dim must be positive");
  if (encoder_widths.size() != 4) fail("encoder_widths needs exactly 4 entries");
  if (std::any_of(encoder_widths.begin(), encoder_widths.end(), [](auto w) { return w < 1; }))
    fail("encoder widths must be positive");
  if (stem_downsample != 1 && stem_downsample != 2 && stem_downsample != 4)
    fail("stem_downsample must be 1, 2 or 4");
  if (base_resolution < 1) fail("base_resolution must be positive");
  if (num_stages < 1 || num_stages > 12) fail("num_stages must be in [1, 12]");
  if (static_cast<std::int64_t>(decoder_channels.size()) < num_stages)
    fail("decoder_channels needs one entry per stage");
  if (static_cast<std::int64_t>(image_disc_channels.size()) < num_stages)
    fail("image_disc_channels needs one entry per stage");
  if (latent_disc_width < 1 || latent_disc_hidden_layers < 1)
    fail("latent discriminator needs at least one hidden layer of positive width");
}

const std::vector<std::string>& all_groups() {
  static const std::vector<std::string> groups{
      "encoder.stem",   "encoder.block1", "encoder.block2", "encoder.block3", "encoder.block4",
      "encoder.head",   "decoder",        "latent_disc",    "image_disc"};
  return groups;
}

std::set<std::string> trainable_groups(const FreezePolicy& policy, std::int64_t epoch) {
  std::set<std::string> groups(all_groups().begin(), all_groups().end());
  const std::int64_t frozen = epoch < policy.lock_all_epochs ? 4 : std::clamp<std::int64_t>(policy.frozen_blocks, 0, 4);
  if (frozen > 0) groups.erase("encoder.stem");
  for (std::int64_t b = 1; b <= frozen; ++b) groups.erase("encoder.block" + std::to_string(b));
  return groups;
}

// ---------------------------------------------------------------------------------------------
// Encoder

ResidualBlockImpl::ResidualBlockImpl(std::int64_t in_channels, std::int64_t out_channels,
                                     std::int64_t stride, std::uint64_t seed) {
  conv1_ = register_module("conv1", make_conv(in_channels, out_channels, 3, stride,
                                              layer_seed(seed, "conv1"), kReluGain));
  conv2_ = register_module("conv2", make_conv(out_channels, out_channels, 3, 1,
                                              layer_seed(seed, "conv2"), 1.0));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = register_module("shortcut", make_conv(in_channels, out_channels, 1, stride,
                                                      layer_seed(seed, "shortcut"), 1.0));
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv2_(torch::relu(conv1_(x)));
  return torch::relu(h + (shortcut_ ? shortcut_(x) : x));
}

EncoderImpl::EncoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto seed = config_.init_seed;
  const auto& w = config_.encoder_widths;
  stem_ = register_module("stem", make_conv(3, w[0], 3, config_.stem_downsample > 1 ? 2 : 1,
                                            layer_seed(seed, "encoder.stem"), kReluGain));
  std::int64_t in = w[0];
  for (int b = 0; b < 4; ++b) {
    const std::string name = "block" + std::to_string(b + 1);
    blocks_.push_back(register_module(
        name, ResidualBlock(in, w[b], b == 0 ? 1 : 2, layer_seed(seed, "encoder." + name))));
    in = w[b];
  }
  head_conv_ = register_module("head_conv", make_conv(in, in, 3, 1, layer_seed(seed, "encoder.head_conv"), kReluGain));

  // Size the projection from a dry run.
  std::int64_t flat = 0;
  {
    torch::NoGradGuard no_grad;
    auto h = torch::zeros({1, 3, config_.input_size, config_.input_size});
    h = stem_(h);
    if (config_.stem_downsample == 4) h = F::max_pool2d(h, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    for (auto& b : blocks_) h = b(h);
    flat = head_conv_(h).numel();
  }
  head_fc_ = register_module("head_fc", make_linear(flat, config_.latent_dim,
                                                    layer_seed(seed, "encoder.head_fc"), 1.0));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != config_.input_size ||
      x.size(3) != config_.input_size) {
    throw InvalidInput("encoder expects [N, 3, " + std::to_string(config_.input_size) + ", " +
                       std::to_string(config_.input_size) + "] input");
  }
  auto h = torch::relu(stem_(x));
  if (config_.stem_downsample == 4) h = F::max_pool2d(h, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  for (auto& b : blocks_) h = b(h);
  h = torch::relu(head_conv_(h));
  return head_fc_(h.flatten(1));
}

std::vector<torch::Tensor> EncoderImpl::group_parameters(const std::string& group) const {
  std::vector<torch::Tensor> out;
  if (group == "stem") {
    append(out, params_of(*stem_));
  } else if (group == "head") {
    append(out, params_of(*head_conv_));
    append(out, params_of(*head_fc_));
  } else if (group.rfind("block", 0) == 0 && group.size() == 6 && group[5] >= '1' && group[5] <= '4') {
    append(out, params_of(*blocks_[group[5] - '1']));
  } else {
    throw InvalidInput("unknown encoder group '" + group + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Decoder

DecoderImpl::DecoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto seed = config_.init_seed;
  const auto c0 = config_.decoder_channels[0];
  const auto b = config_.base_resolution;
  deprojection_ = register_module(
      "deprojection", make_linear(config_.latent_dim, c0 * b * b, layer_seed(seed, "decoder.deprojection"), kReluGain));
  base_conv_ = register_module("base_conv", make_conv(c0, c0, 3, 1, layer_seed(seed, "decoder.base_conv"), kReluGain));
  to_rgb_.push_back(register_module("to_rgb0", make_conv(c0, 3, 1, 1, layer_seed(seed, "decoder.to_rgb0"), 1.0)));
}

void DecoderImpl::grow() {
  const auto s = grown_stages();
  if (s >= config_.num_stages) throw InvalidInput("decoder is already at the final stage");
  const auto seed = config_.init_seed;
  const auto in = config_.decoder_channels[s - 1];
  const auto out = config_.decoder_channels[s];
  const auto tag = std::to_string(s);
  auto conv1 = register_module("block" + tag + "_conv1",
                               make_conv(in, out, 3, 1, layer_seed(seed, "decoder.block" + tag + "_conv1"), kReluGain));
  auto conv2 = register_module("block" + tag + "_conv2",
                               make_conv(out, out, 3, 1, layer_seed(seed, "decoder.block" + tag + "_conv2"), kReluGain));
  blocks_.emplace_back(conv1, conv2);
  to_rgb_.push_back(register_module("to_rgb" + tag,
                                    make_conv(out, 3, 1, 1, layer_seed(seed, "decoder.to_rgb" + tag), 1.0)));
}

torch::Tensor DecoderImpl::features(const torch::Tensor& z, std::int64_t stage, torch::Tensor* previous) {
  const auto b = config_.base_resolution;
  auto h = lrelu(deprojection_(z)).view({z.size(0), config_.decoder_channels[0], b, b});
  h = lrelu(base_conv_(h));
  for (std::int64_t k = 1; k <= stage; ++k) {
    if (k == stage && previous) *previous = h;
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    auto& [conv1, conv2] = blocks_[k - 1];
    h = lrelu(conv2(lrelu(conv1(h))));
  }
  return h;
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z, const GrowthState& state) {
  if (z.dim() != 2 || z.size(1) != config_.latent_dim) {
    throw InvalidInput("decoder expects [N, " + std::to_string(config_.latent_dim) + "] latents");
  }
  if (state.stage < 0 || state.stage >= grown_stages()) {
    throw InvalidInput("decoder stage " + std::to_string(state.stage) + " out of range [0, " +
                       std::to_string(grown_stages()) + ")");
  }
  if (!(state.alpha >= 0.0 && state.alpha <= 1.0)) throw InvalidInput("alpha must lie in [0, 1]");

  const bool fading = state.stage > 0 && state.alpha < 1.0;
  torch::Tensor previous;
  const auto h = features(z, state.stage, fading ? &previous : nullptr);
  auto out = torch::tanh(to_rgb_[state.stage](h));
  if (!fading) return out;

  auto low = torch::tanh(to_rgb_[state.stage - 1](previous));
  low = F::interpolate(low, F::InterpolateFuncOptions()
                                .scale_factor(std::vector<double>{2.0, 2.0})
                                .mode(torch::kBilinear)
                                .align_corners(false));
  return state.alpha * out + (1.0 - state.alpha) * low;
}

// ---------------------------------------------------------------------------------------------
// Discriminators

LatentDiscriminatorImpl::LatentDiscriminatorImpl(const ModelConfig& config) : latent_dim_(config.latent_dim) {
  config.validate();
  std::int64_t in = config.latent_dim;
  for (std::int64_t i = 0; i <= config.latent_disc_hidden_layers; ++i) {
    const bool last = i == config.latent_disc_hidden_layers;
    const std::int64_t out = last ? 1 : config.latent_disc_width;
    const auto name = "fc" + std::to_string(i);
    layers_.push_back(register_module(
        name, make_linear(in, out, layer_seed(config.init_seed, "latent_disc." + name), last ? 1.0 : kReluGain)));
    in = out;
  }
}

torch::Tensor LatentDiscriminatorImpl::forward(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != latent_dim_) {
    throw InvalidInput("latent discriminator expects [N, " + std::to_string(latent_dim_) + "] input");
  }
  auto h = z;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = lrelu(layers_[i](h));
  return layers_.back()(h).squeeze(1);
}

ImageDiscriminatorImpl::ImageDiscriminatorImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto seed = config_.init_seed;
  const auto c0 = config_.image_disc_channels[0];
  const auto b = config_.base_resolution;
  from_rgb_.push_back(register_module("from_rgb0", make_conv(3, c0, 1, 1, layer_seed(seed, "image_disc.from_rgb0"), kReluGain)));
  final_conv_ = register_module("final_conv", make_conv(c0, c0, 3, 1, layer_seed(seed, "image_disc.final_conv"), kReluGain));
  final_fc_ = register_module("final_fc", make_linear(c0 * b * b, 1, layer_seed(seed, "image_disc.final_fc"), 1.0));
}

void ImageDiscriminatorImpl::grow() {
  const auto s = grown_stages();
  if (s >= config_.num_stages) throw InvalidInput("image discriminator is already at the final stage");
  const auto seed = config_.init_seed;
  const auto ch = config_.image_disc_channels[s];
  const auto below = config_.image_disc_channels[s - 1];
  const auto tag = std::to_string(s);
  from_rgb_.push_back(register_module("from_rgb" + tag,
                                      make_conv(3, ch, 1, 1, layer_seed(seed, "image_disc.from_rgb" + tag), kReluGain)));
  auto conv1 = register_module("block" + tag + "_conv1",
                               make_conv(ch, ch, 3, 1, layer_seed(seed, "image_disc.block" + tag + "_conv1"), kReluGain));
  auto conv2 = register_module("block" + tag + "_conv2",
                               make_conv(ch, below, 3, 1, layer_seed(seed, "image_disc.block" + tag + "_conv2"), kReluGain));
  blocks_.emplace_back(conv1, conv2);
}

torch::Tensor ImageDiscriminatorImpl::forward(const torch::Tensor& y, const GrowthState& state) {
  if (state.stage < 0 || state.stage >= grown_stages()) {
    throw InvalidInput("image discriminator stage " + std::to_string(state.stage) + " out of range");
  }
  const auto r = config_.resolution(state.stage);
  if (y.dim() != 4 || y.size(1) != 3 || y.size(2) != r || y.size(3) != r) {
    throw InvalidInput("image discriminator at stage " + std::to_string(state.stage) + " expects [N, 3, " +
                       std::to_string(r) + ", " + std::to_string(r) + "] input");
  }
  if (!(state.alpha >= 0.0 && state.alpha <= 1.0)) throw InvalidInput("alpha must lie in [0, 1]");

  auto block = [this](std::int64_t k, const torch::Tensor& x) {
    auto& [conv1, conv2] = blocks_[k - 1];
    return F::avg_pool2d(lrelu(conv2(lrelu(conv1(x)))), F::AvgPool2dFuncOptions(2));
  };
  const auto s = state.stage;
  auto h = lrelu(from_rgb_[s](y));
  if (s > 0) {
    h = block(s, h);
    if (state.alpha < 1.0) {
      auto low = lrelu(from_rgb_[s - 1](F::avg_pool2d(y, F::AvgPool2dFuncOptions(2))));
      h = state.alpha * h + (1.0 - state.alpha) * low;
    }
  }
  for (std::int64_t k = s - 1; k >= 1; --k) h = block(k, h);
  h = lrelu(final_conv_(h));
  return final_fc_(h.flatten(1)).squeeze(1);
}

// ---------------------------------------------------------------------------------------------
// Bundle

Outpainter::Outpainter(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  encoder = Encoder(config_);
  decoder = Decoder(config_);
  latent_disc = LatentDiscriminator(config_);
  image_disc = ImageDiscriminator(config_);
}

void Outpainter::grow_to(std::int64_t stage) {
  if (stage < 0 || stage >= config_.num_stages) {
    throw InvalidInput("cannot grow to stage " + std::to_string(stage));
  }
  while (decoder->grown_stages() <= stage) decoder->grow();
  while (image_disc->grown_stages() <= stage) image_disc->grow();
}

std::vector<std::pair<std::string, torch::Tensor>> Outpainter::named_parameters() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&out](const std::string& prefix, const torch::nn::Module& m) {
    for (const auto& p : m.named_parameters(true)) out.emplace_back(prefix + "/" + p.key(), p.value());
  };
  add("encoder", *encoder);
  add("decoder", *decoder);
  add("latent_disc", *latent_disc);
  add("image_disc", *image_disc);
  return out;
}

std::vector<torch::Tensor> Outpainter::group_parameters(const std::string& group) const {
  if (group.rfind("encoder.", 0) == 0) return encoder->group_parameters(group.substr(8));
  if (group == "decoder") return params_of(*decoder);
  if (group == "latent_disc") return params_of(*latent_disc);
  if (group == "image_disc") return params_of(*image_disc);
  throw InvalidInput("unknown parameter group '" + group + "'");
}

std::int64_t Outpainter::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : named_parameters()) n += p.numel();
  return n;
}

void Outpainter::set_trainable(const FreezePolicy& policy, std::int64_t epoch) {
  const auto groups = model::trainable_groups(policy, epoch);
  for (const auto& g : all_groups()) {
    const bool on = groups.count(g) > 0;
    for (auto& p : group_parameters(g)) p.requires_grad_(on);
  }
}

std::set<std::string> Outpainter::trainable_groups() const {
  std::set<std::string> out;
  for (const auto& g : all_groups()) {
    const auto params = group_parameters(g);
    if (std::all_of(params.begin(), params.end(), [](const torch::Tensor& p) { return p.requires_grad(); }))
      out.insert(g);
  }
  return out;
}

Outpainter Outpainter::clone() const {
  Outpainter copy(config_);
  copy.grow_to(grown_stages() - 1);
  torch::NoGradGuard no_grad;
  auto dst = copy.named_parameters();
  const auto src = named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i].second.copy_(src[i].second);
    dst[i].second.requires_grad_(src[i].second.requires_grad());
  }
  return copy;
}

torch::Tensor sample_latent(std::int64_t n, std::int64_t latent_dim, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_latent needs n >= 1");
  auto gen = at::detail::createCPUGenerator(seed);
  return torch::randn({n, latent_dim}, gen, torch::kFloat32);
}

}  // namespace vfe::model
