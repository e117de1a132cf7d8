#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfe/model/config.hpp"

namespace vfe::training {

struct AblationFlags {
  bool disable_latent_discriminator = false;
  /// Reconstruct the input crop instead of expanding it; the output head is input-sized.
  bool reconstruction_only = false;
  /// Start and stay at the final resolution with alpha = 1.
  bool disable_progressive = false;
};

struct StageSchedule {
  std::int64_t base_resolution = 7;
  std::int64_t num_stages = 6;
  /// One entry per stage, or a single entry applied to every stage. Empty means
  /// ceil(epochs_per_stage * |train| / batch_size) steps per stage.
  std::vector<std::int64_t> steps_per_stage;
  double epochs_per_stage = 80.0;
  double fade_fraction = 0.5;
};

struct TrainConfig {
  double lambda_recon = 10.0;
  double learning_rate = 1e-3;
  double adam_beta0 = 0.0;
  double adam_beta1 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t batch_size = 16;
  /// 0 disables clipping.
  double clip_grad_norm = 0.0;
  /// Weight of the generator term against D_Y in the reconstruction step.
  double image_adv_weight = 1.0;
  /// Weight of the generator term against D_Z in the regularization step.
  double latent_adv_weight = 1.0;
  /// Learning-rate multiplier of the regularization optimizer. Adam ignores loss scale, so this
  /// (not latent_adv_weight) sets how hard each regularization step moves the encoder.
  double reg_lr_scale = 1.0;
  /// Learning-rate multiplier of both discriminator optimizers.
  double disc_lr_scale = 1.0;
  std::uint64_t seed = 0;
  model::FreezePolicy freeze;
  AblationFlags ablation;
};

struct OutputConfig {
  std::string dir = "run";
  /// Extra periodic checkpoints every N steps (0: only at start and at stage ends).
  std::int64_t checkpoint_every = 0;
};

/// Everything a training run needs; the layout of the JSON config file.
struct RunConfig {
  model::ModelConfig model;
  StageSchedule schedule;
  TrainConfig train;
  std::string manifest;
  OutputConfig output;

  /// Model config with the schedule's resolutions applied. Under reconstruction_only the
  /// last stage is dropped so the output matches the encoder input size.
  model::ModelConfig effective_model() const;
  /// Resolved per-stage step counts for a training split of `train_records` tiles.
  std::vector<std::int64_t> stage_steps(std::size_t train_records) const;
  /// Throws InvalidInput on any inconsistency.
  void validate() const;
  /// Hex FNV-1a of the canonical model/schedule/train sections.
  std::string hash() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Strict: unknown keys and wrong types are rejected with InvalidInput.
RunConfig from_json(const nlohmann::json& j);

/// Applies "section.key=value" overrides. Keys must already exist in the documented layout;
/// values are parsed as JSON, falling back to a plain string.
nlohmann::json apply_overrides(nlohmann::json config, const std::vector<std::string>& overrides);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// A small configuration that trains 16 px crops into 32 px expansions on CPU.
RunConfig desk_config();

}  // namespace vfe::training
