#include <cmath>
#include <fstream>
#include <random>

#include "support/temp_dir.hpp"
#include "support/torch_doctest.hpp"
#include "vfe/datakit/synthetic.hpp"
#include "vfe/errors.hpp"
#include "vfe/model/convert.hpp"
#include "vfe/training/adam.hpp"
#include "vfe/training/checkpoint.hpp"
#include "vfe/training/config.hpp"
#include "vfe/training/losses.hpp"
#include "vfe/training/trainer.hpp"

using namespace vfe;
using namespace vfe::training;

namespace {

RunConfig tiny_config() {
  auto c = desk_config();
  c.model.latent_dim = 8;
  c.model.encoder_widths = {8, 8, 8, 8};
  c.model.decoder_channels = {16, 16, 8, 8};
  c.model.image_disc_channels = {16, 16, 8, 8};
  c.model.latent_disc_width = 16;
  c.schedule.steps_per_stage = {3};
  c.train.batch_size = 4;
  c.train.seed = 7;
  return c;
}

datakit::SyntheticCorpus tiny_corpus() {
  datakit::SyntheticOptions o;
  o.tiles = 24;
  o.patients = 6;
  o.tile_size = 32;
  o.ratios = {0.6, 0.2, 0.2};
  return datakit::make_synthetic_corpus(o);
}

std::pair<torch::Tensor, torch::Tensor> one_batch(const datakit::SyntheticCorpus& corpus, int n) {
  datakit::BatchIterator it(corpus.manifest, datakit::Split::Train, n, 0, 0, corpus.source);
  const auto b = it.batch(0);
  return {model::to_tensor(b.targets), model::to_tensor(b.crops)};
}

std::map<std::string, torch::Tensor> params_by_prefix(const model::Outpainter& m, const std::string& prefix) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& [k, v] : m.named_parameters())
    if (k.rfind(prefix, 0) == 0) out[k] = v.detach().clone();
  return out;
}

bool all_equal(const std::map<std::string, torch::Tensor>& a, const std::map<std::string, torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [k, v] : a)
    if (!b.count(k) || !torch::equal(v, b.at(k))) return false;
  return true;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Central differences of a scalar function of one float64 tensor.
torch::Tensor numeric_grad(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x) {
  auto g = torch::zeros_like(x);
  auto flat = x.clone();
  const double h = 1e-6;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    auto plus = flat.clone(), minus = flat.clone();
    plus.view(-1)[i] += h;
    minus.view(-1)[i] -= h;
    g.view(-1)[i] = (f(plus).item<double>() - f(minus).item<double>()) / (2 * h);
  }
  return g;
}

torch::Tensor analytic_grad(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x) {
  auto v = x.clone().requires_grad_(true);
  return torch::autograd::grad({f(v)}, {v})[0];
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("adversarial losses match scalar formulas") {
    auto gen = at::detail::createCPUGenerator(1);
    const auto real = torch::randn({7}, gen, torch::kFloat64) * 4;
    const auto fake = torch::randn({5}, gen, torch::kFloat64) * 4;
    double expect_d = 0.0, expect_g = 0.0;
    for (int i = 0; i < 7; ++i) expect_d += softplus(-real[i].item<double>()) / 7;
    for (int i = 0; i < 5; ++i) {
      expect_d += softplus(fake[i].item<double>()) / 5;
      expect_g += softplus(-fake[i].item<double>()) / 5;
    }
    CHECK(adv_loss_discriminator(real, fake).item<double>() == doctest::Approx(expect_d).epsilon(1e-12));
    CHECK(adv_loss_generator(fake).item<double>() == doctest::Approx(expect_g).epsilon(1e-12));
    const auto zeros = torch::zeros({4}, torch::kFloat64);
    CHECK(adv_loss_discriminator(zeros, zeros).item<double>() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    CHECK(adv_loss_generator(zeros).item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // Large logits must not overflow.
    const auto big = torch::full({2}, 800.0, torch::kFloat64);
    CHECK(std::isfinite(adv_loss_discriminator(big, -big).item<double>()));
    CHECK(adv_loss_generator(-big).item<double>() == doctest::Approx(800.0));
  }

  TEST_CASE("loss gradients match finite differences") {
    auto gen = at::detail::createCPUGenerator(2);
    const auto real = torch::randn({6}, gen, torch::kFloat64) * 3;
    const auto fake = torch::randn({6}, gen, torch::kFloat64) * 3;
    const auto target = torch::randn({6}, gen, torch::kFloat64);
    const std::vector<std::function<torch::Tensor(const torch::Tensor&)>> fs{
        [&](const torch::Tensor& x) { return adv_loss_discriminator(x, fake); },
        [&](const torch::Tensor& x) { return adv_loss_discriminator(real, x); },
        [&](const torch::Tensor& x) { return adv_loss_generator(x); },
        [&](const torch::Tensor& x) { return training::l1_loss(x, target); }};
    for (const auto& f : fs) {
      const auto a = analytic_grad(f, fake);
      const auto n = numeric_grad(f, fake);
      CHECK(torch::allclose(a, n, 1e-6, 1e-8));
    }
  }

  TEST_CASE("l1 loss") {
    const auto a = torch::tensor({1.0, -2.0, 0.5, 0.0});
    const auto b = torch::tensor({0.0, 2.0, 0.5, -1.0});
    CHECK(training::l1_loss(a, b).item<double>() == doctest::Approx(6.0 / 4));
    CHECK_THROWS_AS(training::l1_loss(a, torch::zeros({3})), InvalidInput);
  }

  TEST_CASE("fade alpha law") {
    for (std::int64_t k = 0; k < 10; ++k) CHECK(fade_alpha(0, k, 10, 0.5) == 1.0);
    CHECK(fade_alpha(2, 0, 100, 0.5) == 0.0);
    CHECK(fade_alpha(2, 25, 100, 0.5) == doctest::Approx(0.5));
    CHECK(fade_alpha(1, 50, 200, 0.5) == doctest::Approx(0.5));
    CHECK(fade_alpha(2, 50, 100, 0.5) == 1.0);
    CHECK(fade_alpha(2, 99, 100, 0.5) == 1.0);
    CHECK(fade_alpha(1, 30, 40, 1.0) == doctest::Approx(0.75));
    CHECK(fade_alpha(1, 3, 10, 0.3) == 1.0);
    CHECK(fade_alpha(1, 7, 10, 0.7) == 1.0);
    double previous = -1.0;
    for (std::int64_t k = 0; k < 40; ++k) {
      const double a = fade_alpha(3, k, 40, 0.3);
      CHECK(a >= previous);
      CHECK(a == doctest::Approx(std::min(1.0, k / 12.0)));
      previous = a;
    }
  }

  TEST_CASE("downsampling is a block average") {
    auto gen = at::detail::createCPUGenerator(3);
    const auto y = torch::rand({2, 3, 12, 12}, gen, torch::kFloat64);
    for (std::int64_t r : {1, 2, 3, 4, 6, 12}) {
      const auto d = downsample_target(y, r);
      REQUIRE(d.size(-1) == r);
      const auto f = 12 / r;
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < r; ++j) {
          const auto block = y.index({1, 2, torch::indexing::Slice(i * f, (i + 1) * f), torch::indexing::Slice(j * f, (j + 1) * f)});
          CHECK(d[1][2][i][j].item<double>() == doctest::Approx(block.mean().item<double>()).epsilon(1e-12));
        }
    }
    CHECK(torch::equal(downsample_target(y[0], 12), y[0]));
    CHECK_THROWS_AS(downsample_target(y, 5), InvalidInput);
    CHECK_THROWS_AS(downsample_target(torch::zeros({3, 4, 6}), 2), InvalidInput);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("matches a scalar reference") {
    Adam::Options o;
    o.learning_rate = 0.01;
    o.beta0 = 0.5;
    o.beta1 = 0.9;
    o.eps = 1e-8;
    Adam opt(o);
    auto p = torch::tensor({1.0, -2.0}, torch::kFloat64);
    double ref[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
    const double grads[4][2] = {{0.3, -1.0}, {0.1, 0.0}, {-2.0, 0.5}, {0.7, 0.7}};
    for (int t = 1; t <= 4; ++t) {
      opt.step({{"p", p}}, {torch::tensor({grads[t - 1][0], grads[t - 1][1]}, torch::kFloat64)});
      for (int i = 0; i < 2; ++i) {
        const double g = grads[t - 1][i];
        m[i] = o.beta0 * m[i] + (1 - o.beta0) * g;
        v[i] = o.beta1 * v[i] + (1 - o.beta1) * g * g;
        const double mh = m[i] / (1 - std::pow(o.beta0, t));
        const double vh = v[i] / (1 - std::pow(o.beta1, t));
        ref[i] -= o.learning_rate * mh / (std::sqrt(vh) + o.eps);
        CHECK(p[i].item<double>() == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
    CHECK(opt.slots().at("p").step == 4);
  }

  TEST_CASE("first step moves each coordinate by the learning rate") {
    Adam opt({0.05, 0.0, 0.999, 1e-12});
    auto p = torch::zeros({3}, torch::kFloat64);
    opt.step({{"p", p}}, {torch::tensor({3.0, -1e-3, 200.0}, torch::kFloat64)});
    CHECK(torch::allclose(p, torch::tensor({-0.05, 0.05, -0.05}, torch::kFloat64), 0, 1e-9));
  }

  TEST_CASE("undefined gradients are skipped") {
    Adam opt({});
    auto a = torch::ones({2});
    auto b = torch::ones({2});
    opt.step({{"a", a}, {"b", b}}, {torch::ones({2}), torch::Tensor()});
    CHECK(torch::equal(b, torch::ones({2})));
    CHECK(opt.slots().count("b") == 0);
    CHECK_THROWS_AS(opt.step({{"a", a}}, {}), InvalidInput);
  }

  TEST_CASE("gradient clipping") {
    std::vector<torch::Tensor> g{torch::tensor({3.0}), torch::tensor({4.0}), torch::Tensor()};
    CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(5.0));
    CHECK(g[0].item<double>() == doctest::Approx(3.0));
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0].item<double>() == doctest::Approx(0.6));
    CHECK(g[1].item<double>() == doctest::Approx(0.8));
  }
}

TEST_SUITE("config") {
  TEST_CASE("json round trip and hash") {
    const auto c = desk_config();
    c.validate();
    const auto back = from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(back.hash() == c.hash());
    auto d = c;
    d.train.lambda_recon = 3.0;
    CHECK(d.hash() != c.hash());
    auto e = c;
    e.output.dir = "elsewhere";
    CHECK(e.hash() == c.hash());
  }

  TEST_CASE("shipped configs") {
    const auto dir = std::filesystem::path(VFE_SOURCE_DIR) / "configs";
    auto desk = load_config(dir / "desk.json");
    auto expected = desk_config();
    CHECK(desk.hash() == expected.hash());
    CHECK(to_json(desk)["model"] == to_json(expected)["model"]);
    const auto full = load_config(dir / "full.json");
    CHECK(full.effective_model().output_size() == 224);
    CHECK(to_json(full)["model"] == to_json(RunConfig{})["model"]);
    CHECK(to_json(full)["train"] == to_json(RunConfig{})["train"]);
  }

  TEST_CASE("unknown keys and wrong types are rejected") {
    auto j = to_json(desk_config());
    j["train"]["learning_rat"] = 0.1;
    CHECK_THROWS_AS(from_json(j), InvalidInput);
    j = to_json(desk_config());
    j["train"]["batch_size"] = "big";
    CHECK_THROWS_AS(from_json(j), InvalidInput);
  }

  TEST_CASE("overrides") {
    const auto j = apply_overrides(to_json(desk_config()),
                                   {"ablation.disable_latent_discriminator=true", "train.lambda_recon=2.5",
                                    "output.dir=out/x"});
    const auto c = from_json(j);
    CHECK(c.train.ablation.disable_latent_discriminator);
    CHECK(c.train.lambda_recon == 2.5);
    CHECK(c.output.dir == "out/x");
    CHECK_THROWS_AS(apply_overrides(to_json(desk_config()), {"train.nope=1"}), InvalidInput);
    CHECK_THROWS_AS(apply_overrides(to_json(desk_config()), {"no_equals_sign"}), InvalidInput);
  }

  TEST_CASE("validation") {
    auto c = desk_config();
    c.train.lambda_recon = 0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = desk_config();
    c.schedule.steps_per_stage = {1, 2};
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = desk_config();
    c.model.input_size = 12;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
  }

  TEST_CASE("stage steps and reconstruction-only sizing") {
    auto c = desk_config();
    c.schedule.steps_per_stage = {};
    c.schedule.epochs_per_stage = 2.0;
    c.train.batch_size = 16;
    CHECK(c.stage_steps(100) == std::vector<std::int64_t>(4, 13));
    c.train.ablation.reconstruction_only = true;
    CHECK(c.stage_steps(100).size() == 3);
    CHECK(c.effective_model().output_size() == c.model.input_size);
    c.train.ablation.reconstruction_only = false;
    CHECK(c.effective_model().output_size() == 2 * c.model.input_size);
  }
}

TEST_SUITE("schedule") {
  TEST_CASE("locate, fade and stage ends") {
    ProgressiveSchedule s({4, 6, 2}, 0.5, false);
    CHECK(s.total_steps() == 12);
    CHECK(s.state_at(0) == model::GrowthState{0, 1.0});
    CHECK(s.state_at(4) == model::GrowthState{1, 0.0});
    CHECK(s.state_at(5).alpha == doctest::Approx(1.0 / 3));
    CHECK(s.state_at(7) == model::GrowthState{1, 1.0});
    CHECK(s.state_at(10) == model::GrowthState{2, 0.0});
    std::vector<std::int64_t> ends;
    for (std::int64_t g = 0; g < 12; ++g)
      if (s.is_stage_end(g)) ends.push_back(g);
    CHECK(ends == std::vector<std::int64_t>{3, 9, 11});
    CHECK_THROWS_AS(s.locate(12), InvalidInput);
    CHECK_THROWS_AS(ProgressiveSchedule({3, 0}, 0.5, false), InvalidInput);
  }

  TEST_CASE("without progressive growth every step is at the final stage") {
    ProgressiveSchedule s({4, 6, 2}, 0.5, true);
    for (std::int64_t g = 0; g < 12; ++g) CHECK(s.state_at(g) == model::GrowthState{2, 1.0});
  }
}

TEST_SUITE("trainer") {
  TEST_CASE("one step reports every phase") {
    const auto corpus = tiny_corpus();
    Trainer t(tiny_config());
    const auto [targets, crops] = one_batch(corpus, 4);
    const auto r = t.train_step(targets, crops, {0, 1.0});
    CHECK(r.step == 1);
    CHECK(r.loss_dz.has_value());
    CHECK(r.loss_dy.has_value());
    CHECK(r.loss_gen_z.has_value());
    CHECK(r.loss_gen_y.has_value());
    CHECK(r.loss_l1 > 0.0);
    CHECK(t.global_step() == 1);
    const auto j = to_json(r);
    for (const auto* k : {"step", "stage", "alpha", "loss_l1", "loss_dz", "loss_dy", "loss_gen_z", "loss_gen_y"})
      CHECK(j.contains(k));
    CHECK_THROWS_AS(t.train_step(targets, crops, {1, 1.0}), InvalidInput);
  }

  TEST_CASE("disabling the latent discriminator leaves it untouched") {
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.train.ablation.disable_latent_discriminator = true;
    Trainer t(c);
    const auto before = params_by_prefix(t.model(), "latent_disc/");
    const auto [targets, crops] = one_batch(corpus, 4);
    for (int i = 0; i < 3; ++i) {
      const auto r = t.train_step(targets, crops, {0, 1.0});
      CHECK_FALSE(r.loss_dz.has_value());
      CHECK_FALSE(r.loss_gen_z.has_value());
      CHECK(to_json(r)["loss_dz"].is_null());
    }
    CHECK(all_equal(before, params_by_prefix(t.model(), "latent_disc/")));
  }

  TEST_CASE("discriminator phases do not move the generator") {
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.train.ablation.disable_latent_discriminator = true;
    // Generator gradients of order 1e-32 move weights by at most about 1e-25 (Adam divides by eps),
    // so any visible change would have to leak from the discriminator phase.
    c.train.lambda_recon = 1e-30;
    c.train.image_adv_weight = 0.0;
    Trainer t(c);
    const auto enc = params_by_prefix(t.model(), "encoder/");
    const auto dec = params_by_prefix(t.model(), "decoder/");
    const auto disc = params_by_prefix(t.model(), "image_disc/");
    const auto [targets, crops] = one_batch(corpus, 4);
    t.train_step(targets, crops, {0, 1.0});
    for (const auto* prefix : {"encoder/", "decoder/"}) {
      const auto now = params_by_prefix(t.model(), prefix);
      const auto& was = std::string(prefix) == "encoder/" ? enc : dec;
      for (const auto& [k, v] : was) CHECK(torch::allclose(v, now.at(k), 0.0, 1e-20));
    }
    CHECK_FALSE(all_equal(disc, params_by_prefix(t.model(), "image_disc/")));
  }

  TEST_CASE("frozen groups keep their weights") {
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.train.freeze = {1, 3};
    Trainer t(c);
    t.model().set_trainable(c.train.freeze, 1);
    auto copy = [&](const std::string& g) {
      std::vector<torch::Tensor> out;
      for (const auto& p : t.model().group_parameters(g)) out.push_back(p.detach().clone());
      return out;
    };
    std::map<std::string, std::vector<torch::Tensor>> before;
    for (const auto& g : model::all_groups()) before[g] = copy(g);
    const auto [targets, crops] = one_batch(corpus, 4);
    t.train_step(targets, crops, {0, 1.0});
    t.train_step(targets, crops, {0, 1.0});
    for (const auto& g : model::all_groups()) {
      const auto now = t.model().group_parameters(g);
      bool same = true;
      for (std::size_t i = 0; i < now.size(); ++i) same = same && torch::equal(now[i], before[g][i]);
      const bool frozen = g == "encoder.stem" || g == "encoder.block1" || g == "encoder.block2" || g == "encoder.block3";
      CAPTURE(g);
      CHECK(same == frozen);
    }
  }

  TEST_CASE("reconstruction-only output matches the input size") {
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.train.ablation.reconstruction_only = true;
    Trainer t(c);
    t.model().grow_to(t.model().config().num_stages - 1);
    const auto [targets, crops] = one_batch(corpus, 4);
    const model::GrowthState last{t.model().config().num_stages - 1, 1.0};
    CHECK(t.expand(crops, last).sizes() == crops.sizes());
    CHECK(torch::equal(t.stage_targets(targets, crops, last.stage), crops));
    t.train_step(targets, crops, last);
  }

  TEST_CASE("non-finite losses abort with the partial report") {
    const auto corpus = tiny_corpus();
    Trainer t(tiny_config());
    auto [targets, crops] = one_batch(corpus, 4);
    targets = targets.clone();
    targets[0][0][0][0] = std::numeric_limits<float>::quiet_NaN();
    try {
      t.train_step(targets, crops, {0, 1.0});
      FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
      CHECK(e.report().loss_dz.has_value());
      CHECK(std::isnan(*e.report().loss_dy));
    }
  }
}

TEST_SUITE("progressive run") {
  TEST_CASE("checkpoints, stage entries and growth") {
    const auto corpus = tiny_corpus();
    Trainer t(tiny_config());
    std::vector<std::string> reasons;
    std::vector<std::int64_t> entered;
    std::vector<StepReport> reports;
    RunHooks hooks;
    hooks.on_step = [&](const StepReport& r) { reports.push_back(r); };
    hooks.on_checkpoint = [&](Trainer&, std::string_view why) { reasons.emplace_back(why); };
    hooks.on_stage_enter = [&](Trainer&, std::int64_t s) { entered.push_back(s); };
    run_progressive_training(t, corpus.manifest, corpus.source, hooks);
    CHECK(reasons == std::vector<std::string>{"initial", "stage_end", "stage_end", "stage_end", "stage_end"});
    CHECK(entered == std::vector<std::int64_t>{0, 1, 2, 3});
    REQUIRE(reports.size() == 12);
    const auto schedule = make_schedule(t.config(), corpus.manifest.split_records(datakit::Split::Train).size());
    for (std::size_t g = 0; g < reports.size(); ++g) {
      CHECK(reports[g].step == static_cast<std::int64_t>(g) + 1);
      CHECK(reports[g].stage == schedule.state_at(static_cast<std::int64_t>(g)).stage);
      CHECK(reports[g].alpha == schedule.state_at(static_cast<std::int64_t>(g)).alpha);
    }
    CHECK(t.model().grown_stages() == 4);
    CHECK(t.growth() == model::GrowthState{3, 1.0});
  }

  TEST_CASE("disable_progressive trains only at the final resolution") {
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.train.ablation.disable_progressive = true;
    Trainer t(c);
    std::vector<StepReport> reports;
    std::vector<std::int64_t> entered;
    RunHooks hooks;
    hooks.on_step = [&](const StepReport& r) { reports.push_back(r); };
    hooks.on_stage_enter = [&](Trainer&, std::int64_t s) { entered.push_back(s); };
    run_progressive_training(t, corpus.manifest, corpus.source, hooks);
    REQUIRE(reports.size() == 12);
    for (const auto& r : reports) {
      CHECK(r.stage == 3);
      CHECK(r.alpha == 1.0);
    }
    CHECK(entered == std::vector<std::int64_t>{3});
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load are exact") {
    test::TempDir dir;
    const auto corpus = tiny_corpus();
    Trainer t(tiny_config());
    run_progressive_training(t, corpus.manifest, corpus.source, {}, 5);
    const auto snap = t.snapshot();
    save_checkpoint(dir.path() / "a.ckpt", snap);
    const auto back = load_checkpoint(dir.path() / "a.ckpt");
    CHECK(back.step == 5);
    CHECK(back.growth == snap.growth);
    CHECK(back.grown_stages == snap.grown_stages);
    CHECK(back.config == snap.config);
    CHECK(back.config_hash == snap.config_hash);
    CHECK(back.optimizer_steps == snap.optimizer_steps);
    REQUIRE(back.tensors.size() == snap.tensors.size());
    for (std::size_t i = 0; i < snap.tensors.size(); ++i) {
      CHECK(back.tensors[i].first == snap.tensors[i].first);
      CHECK(torch::equal(back.tensors[i].second, snap.tensors[i].second));
    }
    CHECK(back.find("param/encoder/head_fc.weight") != nullptr);
    CHECK(back.find("nope") == nullptr);
  }

  TEST_CASE("format errors") {
    test::TempDir dir;
    Trainer t(tiny_config());
    const auto path = dir.path() / "a.ckpt";
    save_checkpoint(path, t.snapshot());
    std::string bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
      std::ofstream out(dir.path() / "b.ckpt", std::ios::binary);
      out << b;
    };
    auto versioned = bytes;
    versioned[7] = static_cast<char>(kCheckpointVersion + 1);
    write(versioned);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "b.ckpt"), IncompatibleCheckpoint);
    auto magic = bytes;
    magic[0] = 'X';
    write(magic);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "b.ckpt"), IncompatibleCheckpoint);
    write(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "b.ckpt"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.ckpt"), IoError);
  }

  TEST_CASE("resume reproduces the uninterrupted run") {
    test::TempDir dir;
    const auto corpus = tiny_corpus();
    auto c = tiny_config();
    c.schedule.steps_per_stage = {5};
    std::vector<StepReport> straight, resumed;
    {
      Trainer t(c);
      RunHooks hooks;
      hooks.on_step = [&](const StepReport& r) { straight.push_back(r); };
      run_progressive_training(t, corpus.manifest, corpus.source, hooks);
    }
    {
      Trainer t(c);
      run_progressive_training(t, corpus.manifest, corpus.source, {}, 6);
      save_checkpoint(dir.path() / "mid.ckpt", t.snapshot());
    }
    auto t = trainer_from_checkpoint(load_checkpoint(dir.path() / "mid.ckpt"));
    CHECK(t.global_step() == 6);
    RunHooks hooks;
    hooks.on_step = [&](const StepReport& r) { resumed.push_back(r); };
    run_progressive_training(t, corpus.manifest, corpus.source, hooks, 16);
    REQUIRE(resumed.size() == 10);
    for (std::size_t i = 0; i < resumed.size(); ++i) {
      const auto& a = straight[6 + i];
      const auto& b = resumed[i];
      CHECK(a.step == b.step);
      CHECK(a.stage == b.stage);
      CHECK(a.alpha == b.alpha);
      CHECK(std::abs(a.loss_l1 - b.loss_l1) <= 1e-6);
      CHECK(std::abs(*a.loss_dz - *b.loss_dz) <= 1e-6);
      CHECK(std::abs(*a.loss_dy - *b.loss_dy) <= 1e-6);
      CHECK(std::abs(*a.loss_gen_z - *b.loss_gen_z) <= 1e-6);
      CHECK(std::abs(*a.loss_gen_y - *b.loss_gen_y) <= 1e-6);
    }
  }

  TEST_CASE("restore rejects mismatched checkpoints without side effects") {
    Trainer small(tiny_config());
    auto other = tiny_config();
    other.model.latent_dim = 4;
    Trainer t(other);
    const auto before = params_by_prefix(t.model(), "");
    CHECK_THROWS_AS(t.restore(small.snapshot()), InvalidInput);
    CHECK(all_equal(before, params_by_prefix(t.model(), "")));
    CHECK(t.global_step() == 0);
    CHECK_FALSE(resume_warnings(small.snapshot(), other).empty());
    CHECK(resume_warnings(small.snapshot(), tiny_config()).empty());
  }
}
