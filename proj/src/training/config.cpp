#include "vfe/training/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vfe/errors.hpp"
#include "vfe/hash.hpp"

using nlohmann::json;

namespace vfe::training {

namespace {

json model_json(const model::ModelConfig& m) {
  return {{"input_size", m.input_size},
          {"latent_dim", m.latent_dim},
          {"encoder_widths", m.encoder_widths},
          {"stem_downsample", m.stem_downsample},
          {"decoder_channels", m.decoder_channels},
          {"image_disc_channels", m.image_disc_channels},
          {"latent_disc_width", m.latent_disc_width},
          {"latent_disc_hidden_layers", m.latent_disc_hidden_layers},
          {"init_seed", m.init_seed}};
}

json schedule_json(const StageSchedule& s) {
  return {{"base_resolution", s.base_resolution},
          {"num_stages", s.num_stages},
          {"steps_per_stage", s.steps_per_stage},
          {"epochs_per_stage", s.epochs_per_stage},
          {"fade_fraction", s.fade_fraction}};
}

json train_json(const TrainConfig& t) {
  return {{"lambda_recon", t.lambda_recon},
          {"learning_rate", t.learning_rate},
          {"adam_beta0", t.adam_beta0},
          {"adam_beta1", t.adam_beta1},
          {"adam_eps", t.adam_eps},
          {"batch_size", t.batch_size},
          {"clip_grad_norm", t.clip_grad_norm},
          {"image_adv_weight", t.image_adv_weight},
          {"latent_adv_weight", t.latent_adv_weight},
          {"reg_lr_scale", t.reg_lr_scale},
          {"disc_lr_scale", t.disc_lr_scale},
          {"seed", t.seed}};
}

// Every key of `given` must exist in `reference` with a compatible type.
void check_layout(const json& given, const json& reference, const std::string& path) {
  if (reference.is_object()) {
    if (!given.is_object()) throw InvalidInput("config: '" + path + "' must be an object");
    for (const auto& [key, value] : given.items()) {
      const auto name = path.empty() ? key : path + "." + key;
      if (!reference.contains(key)) throw InvalidInput("config: unknown key '" + name + "'");
      check_layout(value, reference.at(key), name);
    }
    return;
  }
  const bool ok = (reference.is_boolean() && given.is_boolean()) ||
                  (reference.is_number() && given.is_number()) ||
                  (reference.is_string() && given.is_string()) ||
                  (reference.is_array() && given.is_array());
  if (!ok) throw InvalidInput("config: '" + path + "' has the wrong type");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

model::ModelConfig RunConfig::effective_model() const {
  auto m = model;
  m.base_resolution = schedule.base_resolution;
  m.num_stages = schedule.num_stages - (train.ablation.reconstruction_only ? 1 : 0);
  return m;
}

std::vector<std::int64_t> RunConfig::stage_steps(std::size_t train_records) const {
  const auto stages = effective_model().num_stages;
  std::vector<std::int64_t> steps;
  if (schedule.steps_per_stage.empty()) {
    const auto per = static_cast<std::int64_t>(std::ceil(
        schedule.epochs_per_stage * static_cast<double>(train_records) / static_cast<double>(train.batch_size)));
    steps.assign(stages, std::max<std::int64_t>(per, 1));
  } else if (schedule.steps_per_stage.size() == 1) {
    steps.assign(stages, schedule.steps_per_stage.front());
  } else {
    steps.assign(schedule.steps_per_stage.begin(), schedule.steps_per_stage.begin() + stages);
  }
  return steps;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw InvalidInput("config: " + what); };
  const auto& t = train;
  if (!(t.lambda_recon > 0.0)) fail("train.lambda_recon must be > 0");
  if (!(t.learning_rate > 0.0)) fail("train.learning_rate must be > 0");
  if (!(t.adam_beta0 >= 0.0 && t.adam_beta0 < 1.0)) fail("train.adam_beta0 must be in [0, 1)");
  if (!(t.adam_beta1 > 0.0 && t.adam_beta1 < 1.0)) fail("train.adam_beta1 must be in (0, 1)");
  if (!(t.adam_eps > 0.0)) fail("train.adam_eps must be > 0");
  if (t.batch_size < 1) fail("train.batch_size must be >= 1");
  if (t.clip_grad_norm < 0.0) fail("train.clip_grad_norm must be >= 0");
  if (t.image_adv_weight < 0.0 || t.latent_adv_weight < 0.0) fail("adversarial weights must be >= 0");
  if (!(t.reg_lr_scale > 0.0)) fail("train.reg_lr_scale must be > 0");
  if (!(t.disc_lr_scale > 0.0)) fail("train.disc_lr_scale must be > 0");
  if (t.freeze.lock_all_epochs < 0 || t.freeze.frozen_blocks < 0 || t.freeze.frozen_blocks > 4)
    fail("freeze policy out of range");
  if (!(schedule.fade_fraction > 0.0 && schedule.fade_fraction <= 1.0)) fail("schedule.fade_fraction must be in (0, 1]");
  if (!(schedule.epochs_per_stage > 0.0)) fail("schedule.epochs_per_stage must be > 0");
  if (schedule.num_stages < (t.ablation.reconstruction_only ? 2 : 1)) fail("schedule.num_stages too small");
  const auto n = static_cast<std::size_t>(schedule.num_stages);
  if (schedule.steps_per_stage.size() > 1 && schedule.steps_per_stage.size() != n)
    fail("schedule.steps_per_stage needs 1 or num_stages entries");
  for (auto s : schedule.steps_per_stage)
    if (s < 1) fail("schedule.steps_per_stage entries must be >= 1");

  const auto m = effective_model();
  m.validate();
  const auto expected = t.ablation.reconstruction_only ? m.input_size : 2 * m.input_size;
  if (m.output_size() != expected) {
    fail("final resolution " + std::to_string(m.output_size()) + " must equal " +
         std::to_string(expected) + (t.ablation.reconstruction_only ? " (input size)" : " (2 x input size)"));
  }
}

std::string RunConfig::hash() const {
  const json canonical = {{"model", model_json(model)},
                          {"schedule", schedule_json(schedule)},
                          {"train", to_json(*this).at("train")}};
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical.dump());
  return out.str();
}

json to_json(const RunConfig& c) {
  auto train = train_json(c.train);
  train["freeze"] = {{"lock_all_epochs", c.train.freeze.lock_all_epochs},
                     {"frozen_blocks", c.train.freeze.frozen_blocks}};
  return {{"model", model_json(c.model)},
          {"schedule", schedule_json(c.schedule)},
          {"train", train},
          {"ablation",
           {{"disable_latent_discriminator", c.train.ablation.disable_latent_discriminator},
            {"reconstruction_only", c.train.ablation.reconstruction_only},
            {"disable_progressive", c.train.ablation.disable_progressive}}},
          {"data", {{"manifest", c.manifest}}},
          {"output", {{"dir", c.output.dir}, {"checkpoint_every", c.output.checkpoint_every}}}};
}

RunConfig from_json(const json& j) {
  check_layout(j, to_json(RunConfig{}), "");
  RunConfig c;
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read(m, "input_size", c.model.input_size);
      read(m, "latent_dim", c.model.latent_dim);
      read(m, "encoder_widths", c.model.encoder_widths);
      read(m, "stem_downsample", c.model.stem_downsample);
      read(m, "decoder_channels", c.model.decoder_channels);
      read(m, "image_disc_channels", c.model.image_disc_channels);
      read(m, "latent_disc_width", c.model.latent_disc_width);
      read(m, "latent_disc_hidden_layers", c.model.latent_disc_hidden_layers);
      read(m, "init_seed", c.model.init_seed);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      read(s, "base_resolution", c.schedule.base_resolution);
      read(s, "num_stages", c.schedule.num_stages);
      read(s, "steps_per_stage", c.schedule.steps_per_stage);
      read(s, "epochs_per_stage", c.schedule.epochs_per_stage);
      read(s, "fade_fraction", c.schedule.fade_fraction);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      read(t, "lambda_recon", c.train.lambda_recon);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "adam_beta0", c.train.adam_beta0);
      read(t, "adam_beta1", c.train.adam_beta1);
      read(t, "adam_eps", c.train.adam_eps);
      read(t, "batch_size", c.train.batch_size);
      read(t, "clip_grad_norm", c.train.clip_grad_norm);
      read(t, "image_adv_weight", c.train.image_adv_weight);
      read(t, "latent_adv_weight", c.train.latent_adv_weight);
      read(t, "reg_lr_scale", c.train.reg_lr_scale);
      read(t, "disc_lr_scale", c.train.disc_lr_scale);
      read(t, "seed", c.train.seed);
      if (t.contains("freeze")) {
        read(t.at("freeze"), "lock_all_epochs", c.train.freeze.lock_all_epochs);
        read(t.at("freeze"), "frozen_blocks", c.train.freeze.frozen_blocks);
      }
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      read(a, "disable_latent_discriminator", c.train.ablation.disable_latent_discriminator);
      read(a, "reconstruction_only", c.train.ablation.reconstruction_only);
      read(a, "disable_progressive", c.train.ablation.disable_progressive);
    }
    if (j.contains("data")) read(j.at("data"), "manifest", c.manifest);
    if (j.contains("output")) {
      read(j.at("output"), "dir", c.output.dir);
      read(j.at("output"), "checkpoint_every", c.output.checkpoint_every);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  return c;
}

json apply_overrides(json config, const std::vector<std::string>& overrides) {
  const json reference = to_json(RunConfig{});
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidInput("override '" + ov + "' is not KEY=VALUE");
    const auto key = ov.substr(0, eq);
    const auto text = ov.substr(eq + 1);

    json::json_pointer ptr;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      ptr /= key.substr(start, dot - start);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (!reference.contains(ptr) || reference.at(ptr).is_object()) {
      throw InvalidInput("override: unknown config key '" + key + "'");
    }
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    config[ptr] = value;
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  auto c = from_json(apply_overrides(std::move(j), overrides));
  c.validate();
  return c;
}

RunConfig desk_config() {
  RunConfig c;
  c.model.input_size = 16;
  c.model.latent_dim = 64;
  c.model.encoder_widths = {16, 32, 64, 128};
  c.model.stem_downsample = 1;
  c.model.decoder_channels = {128, 64, 32, 32};
  c.model.image_disc_channels = {64, 64, 32, 32};
  c.model.latent_disc_width = 128;
  c.schedule.base_resolution = 4;
  c.schedule.num_stages = 4;
  c.schedule.steps_per_stage = {200};
  // Small batches on a tiny corpus: a strong image discriminator saturates the decoder, and
  // the latent regularizer at full rate stalls reconstruction.
  c.train.image_adv_weight = 0.1;
  c.train.reg_lr_scale = 0.1;
  c.train.disc_lr_scale = 0.1;
  c.train.freeze.frozen_blocks = 0;
  return c;
}

}  // namespace vfe::training
