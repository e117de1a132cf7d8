#include "vfe/training/trainer.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "vfe/datakit/random.hpp"
#include "vfe/errors.hpp"
#include "vfe/model/convert.hpp"
#include "vfe/training/losses.hpp"

namespace vfe::training {

namespace {

Adam::Options adam_options(const TrainConfig& t, double lr_scale = 1.0) {
  return {t.learning_rate * lr_scale, t.adam_beta0, t.adam_beta1, t.adam_eps};
}

const std::vector<std::pair<std::string, Adam*>> optimizer_names(Adam& recon, Adam& reg, Adam& dz, Adam& dy) {
  return {{"recon", &recon}, {"reg", &reg}, {"latent_disc", &dz}, {"image_disc", &dy}};
}

void check_finite(double value, const char* name, const StepReport& report) {
  if (std::isfinite(value)) return;
  std::ostringstream msg;
  msg << "non-finite " << name << " (" << value << ") at step " << report.step << ", stage "
      << report.stage << ", alpha " << report.alpha;
  throw TrainingAborted(report, msg.str());
}

}  // namespace

nlohmann::json to_json(const StepReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"step", r.step},       {"stage", r.stage},           {"alpha", r.alpha},
          {"loss_l1", r.loss_l1}, {"loss_dz", opt(r.loss_dz)},  {"loss_dy", opt(r.loss_dy)},
          {"loss_gen_z", opt(r.loss_gen_z)}, {"loss_gen_y", opt(r.loss_gen_y)}};
}

// ---------------------------------------------------------------------------------------------

Trainer::Trainer(RunConfig config)
    : config_((config.validate(), std::move(config))),
      model_(config_.effective_model()),
      recon_opt_(adam_options(config_.train)),
      reg_opt_(adam_options(config_.train, config_.train.reg_lr_scale)),
      latent_disc_opt_(adam_options(config_.train, config_.train.disc_lr_scale)),
      image_disc_opt_(adam_options(config_.train, config_.train.disc_lr_scale)) {
  // Saturated discriminators drive activations into the denormal range, which is very slow on CPU.
  at::globalContext().setFlushDenormal(true);
  if (config_.train.ablation.disable_progressive) {
    model_.grow_to(model_.config().num_stages - 1);
    growth_ = {model_.config().num_stages - 1, 1.0};
  }
}

std::vector<std::pair<std::string, torch::Tensor>> Trainer::trainable(
    std::initializer_list<std::string_view> prefixes) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& [name, p] : model_.named_parameters()) {
    if (!p.requires_grad()) continue;
    for (auto prefix : prefixes) {
      if (name.compare(0, prefix.size(), prefix) == 0) {
        out.emplace_back(name, p);
        break;
      }
    }
  }
  return out;
}

void Trainer::apply(Adam& opt, const torch::Tensor& loss,
                    const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  if (params.empty()) return;
  std::vector<torch::Tensor> inputs;
  inputs.reserve(params.size());
  for (const auto& [name, p] : params) inputs.push_back(p);
  auto grads = torch::autograd::grad({loss}, inputs, /*grad_outputs=*/{}, /*retain_graph=*/false,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  if (config_.train.clip_grad_norm > 0.0) clip_grad_norm(grads, config_.train.clip_grad_norm);
  opt.step(params, grads);
}

torch::Tensor Trainer::stage_targets(const torch::Tensor& targets, const torch::Tensor& crops,
                                     std::int64_t stage) const {
  const auto r = model_.config().resolution(stage);
  return downsample_target(config_.train.ablation.reconstruction_only ? crops : targets, r);
}

StepReport Trainer::train_step(const torch::Tensor& targets, const torch::Tensor& crops,
                               const model::GrowthState& state) {
  if (state.stage < 0 || state.stage >= model_.grown_stages()) {
    throw InvalidInput("train_step: stage " + std::to_string(state.stage) + " has not been grown");
  }
  const auto& t = config_.train;
  const bool use_dz = !t.ablation.disable_latent_discriminator;
  const auto real = stage_targets(targets, crops, state.stage);

  StepReport report;
  report.step = global_step_ + 1;
  report.stage = state.stage;
  report.alpha = state.stage == 0 ? 1.0 : state.alpha;

  // Encoder and decoder stay fixed until the reconstruction phase, so one forward pass serves
  // both discriminator phases and the reconstruction phase.
  const auto z = model_.encoder(crops);
  const auto out = model_.decoder(z, state);

  if (use_dz) {
    const auto prior = model::sample_latent(crops.size(0), model_.config().latent_dim,
                                            datakit::derive_seed(t.seed, static_cast<std::uint64_t>(global_step_)));
    const auto loss = adv_loss_discriminator(model_.latent_disc(prior), model_.latent_disc(z.detach()));
    report.loss_dz = loss.item<double>();
    check_finite(*report.loss_dz, "loss_dz", report);
    apply(latent_disc_opt_, loss, trainable({"latent_disc/"}));
  }

  {
    const auto loss = adv_loss_discriminator(model_.image_disc(real, state), model_.image_disc(out.detach(), state));
    report.loss_dy = loss.item<double>();
    check_finite(*report.loss_dy, "loss_dy", report);
    apply(image_disc_opt_, loss, trainable({"image_disc/"}));
  }

  {
    const auto l1 = training::l1_loss(out, real);
    const auto gen_y = adv_loss_generator(model_.image_disc(out, state));
    report.loss_l1 = l1.item<double>();
    report.loss_gen_y = gen_y.item<double>();
    check_finite(report.loss_l1, "loss_l1", report);
    check_finite(*report.loss_gen_y, "loss_gen_y", report);
    apply(recon_opt_, t.lambda_recon * l1 + t.image_adv_weight * gen_y, trainable({"encoder/", "decoder/"}));
  }

  if (use_dz) {
    const auto gen_z = adv_loss_generator(model_.latent_disc(model_.encoder(crops)));
    report.loss_gen_z = gen_z.item<double>();
    check_finite(*report.loss_gen_z, "loss_gen_z", report);
    apply(reg_opt_, t.latent_adv_weight * gen_z, trainable({"encoder/"}));
  }

  ++global_step_;
  growth_ = {state.stage, report.alpha};
  return report;
}

torch::Tensor Trainer::expand(const torch::Tensor& crops, const model::GrowthState& state) {
  torch::NoGradGuard no_grad;
  return model_.decoder(model_.encoder(crops), state);
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config_hash = config_.hash();
  c.config = training::to_json(config_);
  c.step = global_step_;
  c.growth = growth_;
  c.grown_stages = model_.grown_stages();
  for (const auto& [name, p] : model_.named_parameters()) c.tensors.emplace_back("param/" + name, p.detach().clone());
  auto* self = const_cast<Trainer*>(this);
  for (const auto& [opt_name, opt] :
       optimizer_names(self->recon_opt_, self->reg_opt_, self->latent_disc_opt_, self->image_disc_opt_)) {
    nlohmann::json steps = nlohmann::json::object();
    for (const auto& [param, slot] : opt->slots()) {
      steps[param] = slot.step;
      c.tensors.emplace_back("adam/" + opt_name + "/" + param + "/m", slot.exp_avg.clone());
      c.tensors.emplace_back("adam/" + opt_name + "/" + param + "/v", slot.exp_avg_sq.clone());
    }
    c.optimizer_steps[opt_name] = steps;
  }
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  const auto& mc = model_.config();
  if (ckpt.grown_stages < 1 || ckpt.grown_stages > mc.num_stages) {
    throw InvalidInput("checkpoint grown_stages " + std::to_string(ckpt.grown_stages) + " outside the schedule");
  }
  model::Outpainter fresh(mc);
  fresh.grow_to(ckpt.grown_stages - 1);

  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  auto lookup = [&](const std::string& name, at::IntArrayRef shape) -> const torch::Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InvalidInput("checkpoint lacks tensor '" + name + "'");
    if (it->second->sizes() != shape) throw InvalidInput("checkpoint tensor '" + name + "' has the wrong shape");
    return *it->second;
  };

  // Validate and stage everything before touching *this.
  const auto params = fresh.named_parameters();
  std::vector<const torch::Tensor*> sources;
  for (const auto& [name, p] : params) sources.push_back(&lookup("param/" + name, p.sizes()));

  std::map<std::string, std::map<std::string, Adam::Slot>> slots;
  std::map<std::string, at::IntArrayRef> shapes;
  for (const auto& [name, p] : params) shapes[name] = p.sizes();
  for (const auto& opt_name : {"recon", "reg", "latent_disc", "image_disc"}) {
    if (!ckpt.optimizer_steps.contains(opt_name)) throw InvalidInput(std::string("checkpoint lacks optimizer ") + opt_name);
    for (const auto& [param, step] : ckpt.optimizer_steps.at(opt_name).items()) {
      auto shape = shapes.find(param);
      if (shape == shapes.end()) throw InvalidInput("optimizer state for unknown parameter '" + param + "'");
      const auto prefix = "adam/" + std::string(opt_name) + "/" + param;
      Adam::Slot slot;
      slot.exp_avg = lookup(prefix + "/m", shape->second).clone();
      slot.exp_avg_sq = lookup(prefix + "/v", shape->second).clone();
      slot.step = step.get<std::int64_t>();
      slots[opt_name][param] = std::move(slot);
    }
  }

  {
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second.copy_(*sources[i]);
  }
  model_ = std::move(fresh);
  for (const auto& [opt_name, opt] : optimizer_names(recon_opt_, reg_opt_, latent_disc_opt_, image_disc_opt_)) {
    opt->slots() = std::move(slots[opt_name]);
  }
  global_step_ = ckpt.step;
  growth_ = ckpt.growth;
}

Trainer trainer_from_checkpoint(const Checkpoint& checkpoint) {
  Trainer trainer(from_json(checkpoint.config));
  trainer.restore(checkpoint);
  return trainer;
}

std::vector<std::string> resume_warnings(const Checkpoint& checkpoint, const RunConfig& config) {
  std::vector<std::string> warnings;
  if (checkpoint.config_hash != config.hash()) {
    warnings.push_back("config hash " + config.hash() + " differs from the checkpoint's " + checkpoint.config_hash);
  }
  return warnings;
}

// ---------------------------------------------------------------------------------------------

ProgressiveSchedule::ProgressiveSchedule(std::vector<std::int64_t> steps_per_stage, double fade_fraction,
                                         bool disable_progressive)
    : steps_(std::move(steps_per_stage)), fade_fraction_(fade_fraction), disable_progressive_(disable_progressive) {
  if (steps_.empty()) throw InvalidInput("schedule needs at least one stage");
  for (auto s : steps_) {
    if (s < 1) throw InvalidInput("every stage needs at least one step");
    total_ += s;
  }
}

StagePosition ProgressiveSchedule::locate(std::int64_t global_step) const {
  if (global_step < 0 || global_step >= total_) throw InvalidInput("step outside the schedule");
  std::int64_t start = 0;
  for (std::int64_t s = 0; s < num_stages(); ++s) {
    if (global_step < start + steps_[s]) return {s, global_step - start, steps_[s]};
    start += steps_[s];
  }
  return {};
}

model::GrowthState ProgressiveSchedule::state_at(std::int64_t global_step) const {
  const auto pos = locate(global_step);
  if (disable_progressive_) return {num_stages() - 1, 1.0};
  return {pos.stage, fade_alpha(pos.stage, pos.step_in_stage, pos.steps_in_stage, fade_fraction_)};
}

bool ProgressiveSchedule::is_stage_end(std::int64_t global_step) const {
  const auto pos = locate(global_step);
  return pos.step_in_stage + 1 == pos.steps_in_stage;
}

ProgressiveSchedule make_schedule(const RunConfig& config, std::size_t train_records) {
  return ProgressiveSchedule(config.stage_steps(train_records), config.schedule.fade_fraction,
                             config.train.ablation.disable_progressive);
}

void run_progressive_training(Trainer& trainer, const datakit::Manifest& manifest,
                              const datakit::TileSource& source, const RunHooks& hooks,
                              std::optional<std::int64_t> stop_at) {
  const auto& cfg = trainer.config();
  const auto train_count = manifest.split_records(datakit::Split::Train).size();
  if (train_count == 0) throw InvalidInput("manifest has no training tiles");
  const auto schedule = make_schedule(cfg, train_count);
  const auto batch_size = cfg.train.batch_size;
  const auto steps_per_epoch = static_cast<std::int64_t>((train_count + batch_size - 1) / batch_size);
  const auto end = std::min(schedule.total_steps(), stop_at.value_or(schedule.total_steps()));

  if (trainer.global_step() == 0 && hooks.on_checkpoint) hooks.on_checkpoint(trainer, "initial");

  std::optional<datakit::BatchIterator> epoch_batches;
  std::int64_t loaded_epoch = -1;
  std::int64_t applied_epoch = -1;
  std::int64_t entered_stage = trainer.model().grown_stages() - 1;
  if (trainer.global_step() == 0) entered_stage = -1;

  for (std::int64_t g = trainer.global_step(); g < end; ++g) {
    const auto state = schedule.state_at(g);
    if (state.stage >= trainer.model().grown_stages()) trainer.model().grow_to(state.stage);
    if (state.stage > entered_stage) {
      entered_stage = state.stage;
      if (hooks.on_stage_enter) hooks.on_stage_enter(trainer, state.stage);
    }

    const auto epoch = g / steps_per_epoch;
    if (epoch != applied_epoch) {
      trainer.model().set_trainable(cfg.train.freeze, epoch);
      applied_epoch = epoch;
    }
    if (epoch != loaded_epoch) {
      epoch_batches.emplace(manifest, datakit::Split::Train, static_cast<int>(batch_size), cfg.train.seed,
                            static_cast<std::uint64_t>(epoch), source);
      loaded_epoch = epoch;
    }
    const auto batch = epoch_batches->batch(static_cast<std::size_t>(g % steps_per_epoch));
    const auto report = trainer.train_step(model::to_tensor(batch.targets), model::to_tensor(batch.crops), state);
    if (hooks.on_step) hooks.on_step(report);

    if (hooks.on_checkpoint) {
      if (schedule.is_stage_end(g)) {
        hooks.on_checkpoint(trainer, "stage_end");
      } else if (cfg.output.checkpoint_every > 0 && (g + 1) % cfg.output.checkpoint_every == 0) {
        hooks.on_checkpoint(trainer, "periodic");
      }
    }
  }
}

}  // namespace vfe::training
