#include "vfe/cli/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfe/cli/adapters.hpp"
#include "vfe/datakit/png_io.hpp"
#include "vfe/datakit/prepare.hpp"
#include "vfe/errors.hpp"
#include "vfe/eval/metrics.hpp"
#include "vfe/eval/probe.hpp"
#include "vfe/training/trainer.hpp"

namespace vfe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  // shared
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string resume;
  std::string out;
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
  // prepare
  std::string tiles;
  std::string masks;
  bool class_dirs = false;
  std::vector<double> ratios;
  std::string threshold_scope = "patient";
  int central_size = 0;
  bool balance = false;
  // expand
  std::string input;
  // sample / fid
  std::int64_t count = 16;
  std::string mode = "expanded";
  std::string real_split = "train";
  std::string features = "encoder";
  // probe
  std::string train_embeddings;
  std::string test_embeddings;
  double l2 = 1e-3;
  int max_iter = 1500;
  double tol = 1e-6;
  std::optional<int> positive_class;
  bool no_standardize = false;
};

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InvalidInput(std::string("missing required option ") + flag);
}

// A checkpoint's model at the state used for generation.
struct LoadedModel {
  training::Trainer trainer;
  model::GrowthState final_state;
  bool at_final_stage = false;
};

LoadedModel load_model(const std::string& path) {
  require(path, "--checkpoint");
  auto ckpt = training::load_checkpoint(path);
  auto trainer = training::trainer_from_checkpoint(ckpt);
  const auto stages = trainer.config().effective_model().num_stages;
  const bool final = trainer.model().grown_stages() == stages;
  model::GrowthState state{stages - 1, 1.0};
  if (final && trainer.growth().stage == stages - 1) state.alpha = trainer.growth().alpha;
  return LoadedModel{std::move(trainer), state, final};
}

void require_final(const LoadedModel& m) {
  if (!m.at_final_stage) {
    throw InvalidInput("checkpoint has grown " + std::to_string(m.trainer.model().grown_stages()) +
                       " of " + std::to_string(m.trainer.config().effective_model().num_stages) +
                       " stages; generation needs the final stage");
  }
}

fs::path manifest_path(const Options& o, const training::RunConfig& config) {
  const auto p = o.manifest.empty() ? config.manifest : o.manifest;
  if (p.empty()) throw InvalidInput("no manifest given (use --manifest)");
  return p;
}

datakit::PngTileSource source_for(const fs::path& manifest) {
  return datakit::PngTileSource(manifest.has_parent_path() ? manifest.parent_path() : fs::path("."));
}

std::string ckpt_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_step%08lld.ckpt", static_cast<long long>(step));
  return buf;
}

int cmd_prepare(const Options& o) {
  require(o.tiles, "--tiles");
  require(o.out, "--out");
  datakit::PrepareOptions p;
  p.tile_dir = o.tiles;
  if (!fs::is_directory(p.tile_dir)) throw InvalidInput("tile directory does not exist: " + o.tiles);
  if (!o.masks.empty()) {
    p.mask_dir = fs::path(o.masks);
    if (!fs::is_directory(*p.mask_dir)) throw InvalidInput("mask directory does not exist: " + o.masks);
  }
  p.class_dirs = o.class_dirs;
  p.central_size = o.central_size;
  p.threshold_scope = datakit::parse_threshold_scope(o.threshold_scope);
  p.balance = o.balance;
  if (!o.ratios.empty()) {
    if (o.ratios.size() != 3) throw InvalidInput("--ratios needs three values: train,val,test");
    p.ratios = {o.ratios[0], o.ratios[1], o.ratios[2]};
  }
  p.seed = o.seed.value_or(0);
  const fs::path out = o.out;
  const auto base = out.has_parent_path() ? out.parent_path() : fs::path(".");
  const auto result = datakit::prepare_manifest(p, fs::absolute(base));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  datakit::write_manifest(result.manifest, out);
  std::cout << "scanned " << result.scanned << " tiles, unreadable " << result.unreadable
            << ", discarded (background) " << result.discarded_background << ", kept "
            << result.manifest.records.size() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  require(o.config, "--config");
  auto overrides = o.overrides;
  if (o.seed) overrides.push_back("train.seed=" + std::to_string(*o.seed));
  if (!o.out.empty()) overrides.push_back("output.dir=" + json(o.out).dump());
  const auto config = training::load_config(o.config, overrides);

  // Everything is checked before the first write.
  const fs::path manifest_file = config.manifest;
  if (manifest_file.empty()) throw InvalidInput("config: data.manifest is empty");
  const auto manifest = datakit::read_manifest(manifest_file);
  if (manifest.tile_size != 2 * config.model.input_size) {
    throw InvalidInput("manifest tiles are " + std::to_string(manifest.tile_size) +
                       " px but the model expects " + std::to_string(2 * config.model.input_size));
  }
  if (manifest.split_records(datakit::Split::Train).empty()) {
    throw InvalidInput("manifest has no training tiles");
  }
  training::Trainer trainer(config);
  if (!o.resume.empty()) {
    const auto ckpt = training::load_checkpoint(o.resume);
    for (const auto& w : training::resume_warnings(ckpt, config)) std::cerr << "warning: " << w << "\n";
    trainer.restore(ckpt);
    std::cout << "resuming at step " << trainer.global_step() << "\n";
  }
  const auto source = source_for(manifest_file);

  const fs::path dir = config.output.dir;
  fs::create_directories(dir);
  auto resolved = training::to_json(config);
  resolved["hash"] = config.hash();
  write_json(dir / "config.json", resolved);
  std::ofstream log(dir / "steps.ndjson", std::ios::app);
  if (!log) throw IoError("cannot open " + (dir / "steps.ndjson").string());

  training::RunHooks hooks;
  hooks.on_step = [&](const training::StepReport& r) {
    log << training::to_json(r).dump() << '\n';
    log.flush();
    if (r.step % 50 == 0) {
      std::cout << "step " << r.step << " stage " << r.stage << " alpha " << r.alpha << " l1 "
                << r.loss_l1 << "\n";
    }
  };
  hooks.on_checkpoint = [&](training::Trainer& t, std::string_view reason) {
    const auto path = dir / ckpt_name(t.global_step());
    training::save_checkpoint(path, t.snapshot());
    std::cout << "checkpoint (" << reason << ") " << path.string() << "\n";
  };
  try {
    training::run_progressive_training(trainer, manifest, source, hooks);
  } catch (const training::TrainingAborted& e) {
    log << training::to_json(e.report()).dump() << '\n';
    throw;
  }
  return kExitOk;
}

int cmd_expand(const Options& o) {
  require(o.input, "--input");
  require(o.out, "--out");
  auto m = load_model(o.checkpoint);
  require_final(m);
  const auto image = datakit::read_png_rgb(o.input);
  const OutpainterGenerator gen(m.trainer.model(), m.final_state);
  const auto out = gen.expand_crops(std::span(&image, 1));
  const fs::path path = o.out;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  datakit::write_png_rgb(path, out.front());
  return kExitOk;
}

int cmd_sample(const Options& o) {
  require(o.out, "--out");
  if (o.count < 1) throw InvalidInput("--n must be at least 1");
  auto m = load_model(o.checkpoint);
  require_final(m);
  const OutpainterGenerator gen(m.trainer.model(), m.final_state);
  const auto images = gen.sample(o.count, o.seed.value_or(0));
  const fs::path dir = o.out;
  fs::create_directories(dir);
  const int width = std::max<int>(4, static_cast<int>(std::to_string(o.count - 1).size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << "sample_" << std::setw(width) << std::setfill('0') << i << ".png";
    datakit::write_png_rgb(dir / name.str(), images[i]);
  }
  return kExitOk;
}

int cmd_extract(const Options& o) {
  require(o.out, "--out");
  const auto split = datakit::parse_split(o.split);
  auto m = load_model(o.checkpoint);
  const auto mpath = manifest_path(o, m.trainer.config());
  const auto manifest = datakit::read_manifest(mpath);
  const auto source = source_for(mpath);
  const EncoderEmbedder embedder(m.trainer.model().encoder, m.trainer.config().model.latent_dim);
  const fs::path out = o.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const auto e = eval::export_embeddings(embedder, manifest, split, source, out);
  std::cout << "wrote " << e.n << " x " << e.d << " embeddings to " << out.string() << "\n";
  return kExitOk;
}

// Drops nothing: every row must be labeled.
std::vector<int> labels_of(const eval::Embeddings& e, const char* which) {
  for (int y : e.labels)
    if (y < 0) throw InvalidInput(std::string("probe: ") + which + " embeddings contain unlabeled tiles");
  return e.labels;
}

int cmd_probe(const Options& o) {
  require(o.out, "--out");
  eval::Embeddings train, test;
  if (!o.train_embeddings.empty() || !o.test_embeddings.empty()) {
    require(o.train_embeddings, "--train-embeddings");
    require(o.test_embeddings, "--test-embeddings");
    train = eval::read_embeddings(o.train_embeddings);
    test = eval::read_embeddings(o.test_embeddings);
  } else {
    auto m = load_model(o.checkpoint);
    const auto mpath = manifest_path(o, m.trainer.config());
    const auto manifest = datakit::read_manifest(mpath);
    const auto source = source_for(mpath);
    const EncoderEmbedder embedder(m.trainer.model().encoder, m.trainer.config().model.latent_dim);
    train = eval::compute_embeddings(embedder, manifest, datakit::Split::Train, source);
    test = eval::compute_embeddings(embedder, manifest, datakit::parse_split(o.split), source);
  }
  if (train.d != test.d) throw InvalidInput("probe: train and test embeddings differ in dimension");
  const auto train_labels = labels_of(train, "train");
  const auto test_labels = labels_of(test, "test");

  Eigen::MatrixXd xtrain = train.matrix();
  Eigen::MatrixXd xtest = test.matrix();
  if (!o.no_standardize) {
    const auto s = eval::Standardizer::fit(xtrain);
    xtrain = s.apply(xtrain);
    xtest = s.apply(xtest);
  }
  eval::ProbeOptions po;
  po.l2 = o.l2;
  po.max_iter = o.max_iter;
  po.tol = o.tol;
  const auto probe = eval::train_probe(xtrain, train_labels, po);
  auto positive = o.positive_class;
  if (!positive && probe.num_classes() == 2) positive = 1;
  const auto report = eval::evaluate_probe(probe, xtest, test_labels, positive);

  auto j = eval::to_json(report);
  j["class_names"] = train.class_names;
  j["probe"] = {{"l2", probe.l2},
                {"iterations", probe.iterations},
                {"final_loss", probe.final_loss},
                {"final_grad_norm", probe.final_grad_norm},
                {"standardized", !o.no_standardize},
                {"train_count", train.n}};
  write_json(o.out, j);
  std::cout << "accuracy " << report.accuracy << " balanced_accuracy " << report.balanced_accuracy << "\n";
  return kExitOk;
}

int cmd_fid(const Options& o) {
  require(o.out, "--out");
  if (o.mode != "sampled" && o.mode != "expanded") throw InvalidInput("--mode must be sampled or expanded");
  eval::FidOptions fo;
  fo.eval_split = datakit::parse_split(o.split);
  fo.real_split = datakit::parse_split(o.real_split);
  auto m = load_model(o.checkpoint);
  require_final(m);
  const auto mpath = manifest_path(o, m.trainer.config());
  const auto manifest = datakit::read_manifest(mpath);
  const auto source = source_for(mpath);

  std::unique_ptr<eval::FeatureExtractor> extractor;
  if (o.features == "encoder") {
    extractor = std::make_unique<EncoderFeatureExtractor>(m.trainer.model().encoder,
                                                          m.trainer.config().model.input_size);
  } else if (o.features == "channel_stats") {
    extractor = std::make_unique<eval::ChannelStatsExtractor>();
  } else if (o.features == "pixel_mean") {
    extractor = std::make_unique<eval::PixelMeanExtractor>();
  } else {
    throw InvalidInput("unknown --features '" + o.features + "'");
  }
  const OutpainterGenerator gen(m.trainer.model(), m.final_state);
  const double score = o.mode == "sampled"
                           ? eval::fid_sampled(gen, *extractor, manifest, source, o.count, o.seed.value_or(0), fo)
                           : eval::fid_expanded(gen, *extractor, manifest, source, fo);
  json j = {{"mode", o.mode}, {"fid", score}, {"features", extractor->name()},
            {"real_split", o.real_split}};
  if (o.mode == "sampled") {
    j["n"] = o.count;
    j["seed"] = o.seed.value_or(0);
  } else {
    j["split"] = o.split;
  }
  write_json(o.out, j);
  std::cout << o.mode << " fid " << score << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Visual field expansion toolkit", "vfe"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> split_names{"train", "val", "test"};

  auto* prepare = app.add_subcommand("prepare", "Build a tile manifest");
  prepare->add_option("--tiles", o.tiles, "Tile directory")->required();
  prepare->add_option("--masks", o.masks, "Annotation mask directory");
  prepare->add_flag("--class-dirs", o.class_dirs, "Tiles are grouped by class directory");
  prepare->add_option("--ratios", o.ratios, "train val test ratios")->delimiter(',');
  prepare->add_option("--threshold-scope", o.threshold_scope, "tile, patient or global")
      ->check(CLI::IsMember({"tile", "patient", "global"}));
  prepare->add_option("--central-size", o.central_size, "Central labeling window (0 = auto)");
  prepare->add_flag("--balance", o.balance, "Downsample classes to the smallest one");
  prepare->add_option("--seed", o.seed, "Split seed");
  prepare->add_option("--out", o.out, "Manifest CSV path")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", o.config, "Config JSON")->required();
  train->add_option("--override", o.overrides, "section.key=value")->allow_extra_args(false);
  train->add_option("--seed", o.seed, "Training seed");
  train->add_option("--resume", o.resume, "Checkpoint to resume from");
  train->add_option("--out", o.out, "Output directory");

  auto* expand = app.add_subcommand("expand", "Expand one tile");
  expand->add_option("--checkpoint", o.checkpoint)->required();
  expand->add_option("--input", o.input, "Input PNG")->required();
  expand->add_option("--out", o.out, "Output PNG")->required();

  auto* sample = app.add_subcommand("sample", "Decode prior samples");
  sample->add_option("--checkpoint", o.checkpoint)->required();
  sample->add_option("--n", o.count, "Number of images");
  sample->add_option("--seed", o.seed);
  sample->add_option("--out", o.out, "Output directory")->required();

  auto* extract = app.add_subcommand("extract", "Export latent codes");
  extract->add_option("--checkpoint", o.checkpoint)->required();
  extract->add_option("--manifest", o.manifest);
  extract->add_option("--split", o.split)->check(CLI::IsMember(split_names));
  extract->add_option("--out", o.out, "Embeddings file")->required();

  auto* probe = app.add_subcommand("probe", "Linear probe on latent codes");
  probe->add_option("--checkpoint", o.checkpoint);
  probe->add_option("--manifest", o.manifest);
  probe->add_option("--split", o.split, "Evaluation split")->check(CLI::IsMember(split_names));
  probe->add_option("--train-embeddings", o.train_embeddings);
  probe->add_option("--test-embeddings", o.test_embeddings);
  probe->add_option("--l2", o.l2);
  probe->add_option("--max-iter", o.max_iter);
  probe->add_option("--tol", o.tol);
  probe->add_option("--positive-class", o.positive_class);
  probe->add_flag("--no-standardize", o.no_standardize);
  probe->add_option("--out", o.out, "Metrics JSON")->required();

  auto* fid = app.add_subcommand("fid", "Frechet distance of generated images");
  fid->add_option("--checkpoint", o.checkpoint)->required();
  fid->add_option("--manifest", o.manifest);
  fid->add_option("--mode", o.mode)->check(CLI::IsMember({"sampled", "expanded"}));
  fid->add_option("--n", o.count, "Samples in sampled mode");
  fid->add_option("--seed", o.seed);
  fid->add_option("--split", o.split, "Tiles expanded in expanded mode")->check(CLI::IsMember(split_names));
  fid->add_option("--real-split", o.real_split)->check(CLI::IsMember(split_names));
  fid->add_option("--features", o.features)
      ->check(CLI::IsMember({"encoder", "channel_stats", "pixel_mean"}));
  fid->add_option("--out", o.out, "Result JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(o);
    if (train->parsed()) return cmd_train(o);
    if (expand->parsed()) return cmd_expand(o);
    if (sample->parsed()) return cmd_sample(o);
    if (extract->parsed()) return cmd_extract(o);
    if (probe->parsed()) return cmd_probe(o);
    if (fid->parsed()) return cmd_fid(o);
  } catch (const training::TrainingAborted& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitAborted;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IncompatibleCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"vfe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace vfe::cli
