#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "vfe/datakit/batches.hpp"
#include "vfe/datakit/manifest.hpp"
#include "vfe/model/networks.hpp"
#include "vfe/training/adam.hpp"
#include "vfe/training/checkpoint.hpp"
#include "vfe/training/config.hpp"

namespace vfe::training {

/// Loss components of one train_step. Skipped phases are empty.
struct StepReport {
  std::int64_t step = 0;
  std::int64_t stage = 0;
  double alpha = 1.0;
  double loss_l1 = 0.0;
  std::optional<double> loss_dz;
  std::optional<double> loss_dy;
  std::optional<double> loss_gen_z;
  std::optional<double> loss_gen_y;

  bool operator==(const StepReport&) const = default;
};

/// One newline-delimited JSON log record; skipped losses are null.
nlohmann::json to_json(const StepReport& report);

/// Raised when a loss turns non-finite; carries the losses computed so far.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(StepReport report, const std::string& what)
      : std::runtime_error(what), report_(std::move(report)) {}
  const StepReport& report() const { return report_; }

 private:
  StepReport report_;
};

/// Owns the model, the four optimizers and the step counter.
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  const RunConfig& config() const { return config_; }
  model::Outpainter& model() { return model_; }
  const model::Outpainter& model() const { return model_; }
  std::int64_t global_step() const { return global_step_; }
  const model::GrowthState& growth() const { return growth_; }

  /// One optimization step on a batch of full-size targets [N,3,2s,2s] and their centre
  /// crops [N,3,s,s]. Phases, in order: latent discriminator, image discriminator,
  /// reconstruction (encoder + decoder), latent regularization (encoder only).
  StepReport train_step(const torch::Tensor& targets, const torch::Tensor& crops,
                        const model::GrowthState& state);

  /// What the decoder output is compared against at `stage`: the targets, or the crops under
  /// reconstruction_only, area-averaged to the stage resolution.
  torch::Tensor stage_targets(const torch::Tensor& targets, const torch::Tensor& crops,
                              std::int64_t stage) const;

  /// dec(enc(crops)) at `state` without gradients.
  torch::Tensor expand(const torch::Tensor& crops, const model::GrowthState& state);

  Checkpoint snapshot() const;
  /// Replaces model, optimizer state and counters. Validates everything before mutating.
  void restore(const Checkpoint& checkpoint);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> trainable(std::initializer_list<std::string_view> prefixes) const;
  void apply(Adam& opt, const torch::Tensor& loss,
             const std::vector<std::pair<std::string, torch::Tensor>>& params);

  RunConfig config_;
  model::Outpainter model_;
  Adam recon_opt_;
  Adam reg_opt_;
  Adam latent_disc_opt_;
  Adam image_disc_opt_;
  std::int64_t global_step_ = 0;
  model::GrowthState growth_;
};

/// Builds a trainer from the configuration stored in a checkpoint and restores it.
Trainer trainer_from_checkpoint(const Checkpoint& checkpoint);

/// Differences between a checkpoint and the configuration it is resumed under.
std::vector<std::string> resume_warnings(const Checkpoint& checkpoint, const RunConfig& config);

struct StagePosition {
  std::int64_t stage = 0;
  std::int64_t step_in_stage = 0;
  std::int64_t steps_in_stage = 0;
};

/// Maps global steps onto (stage, alpha).
class ProgressiveSchedule {
 public:
  ProgressiveSchedule(std::vector<std::int64_t> steps_per_stage, double fade_fraction,
                      bool disable_progressive);

  std::int64_t total_steps() const { return total_; }
  std::int64_t num_stages() const { return static_cast<std::int64_t>(steps_.size()); }
  /// Position of 0-based step `global_step` in the nominal schedule.
  StagePosition locate(std::int64_t global_step) const;
  /// Stage and alpha used for that step (final stage, alpha 1 without progressive growth).
  model::GrowthState state_at(std::int64_t global_step) const;
  /// True when `global_step` is the last step of its nominal stage.
  bool is_stage_end(std::int64_t global_step) const;

 private:
  std::vector<std::int64_t> steps_;
  double fade_fraction_;
  bool disable_progressive_;
  std::int64_t total_ = 0;
};

ProgressiveSchedule make_schedule(const RunConfig& config, std::size_t train_records);

struct RunHooks {
  std::function<void(const StepReport&)> on_step;
  /// reason: "initial", "stage_end" or "periodic".
  std::function<void(Trainer&, std::string_view reason)> on_checkpoint;
  /// Called after the model has grown into `stage`, before its first step.
  std::function<void(Trainer&, std::int64_t stage)> on_stage_enter;
};

/// Drives the trainer from its current global step through the whole schedule (or until
/// `stop_at` steps are done): grows between stages, fades alpha in, applies the freeze policy
/// per epoch and reports through the hooks.
void run_progressive_training(Trainer& trainer, const datakit::Manifest& manifest,
                              const datakit::TileSource& source, const RunHooks& hooks,
                              std::optional<std::int64_t> stop_at = std::nullopt);

}  // namespace vfe::training
