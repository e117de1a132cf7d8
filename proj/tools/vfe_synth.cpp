// Writes the procedural stripe corpus as PNG tiles plus manifest.csv, ready for `vfe train`.

#include <iostream>

#include <CLI11.hpp>

#include "vfe/datakit/synthetic.hpp"
#include "vfe/errors.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic two-class tile corpus"};
  vfe::datakit::SyntheticOptions options;
  fs::path out = "data/synthetic";
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--tiles", options.tiles, "Number of tiles")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--patients", options.patients, "Number of patients")->capture_default_str()->check(CLI::Range(3, 1 << 20));
  app.add_option("--tile-size", options.tile_size, "Tile side in pixels")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--seed", options.seed, "Corpus seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto corpus = vfe::datakit::make_synthetic_corpus(options);
    vfe::datakit::write_synthetic_corpus(corpus, out);
    vfe::datakit::write_manifest(corpus.manifest, out / "manifest.csv");
    std::cout << "wrote " << corpus.manifest.records.size() << " tiles and " << (out / "manifest.csv").string()
              << "\n";
  } catch (const vfe::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
