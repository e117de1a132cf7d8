#include "vfe/datakit/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "vfe/datakit/png_io.hpp"
#include "vfe/datakit/random.hpp"
#include "vfe/errors.hpp"

namespace vfe::datakit {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct Rgb {
  double r, g, b;
};

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

}  // namespace

ImageTensor synthetic_tile(int label, int size, std::uint64_t seed) {
  if (label != 0 && label != 1) throw InvalidInput("synthetic_tile: label must be 0 or 1");
  if (size < 2) throw InvalidInput("synthetic_tile: size must be at least 2");
  std::mt19937_64 rng(seed);
  constexpr double kPi = std::numbers::pi;
  // Stain-like palette with per-tile jitter.
  const Rgb light{uniform(rng, 215, 245), uniform(rng, 150, 190), uniform(rng, 190, 225)};
  const Rgb dark{uniform(rng, 90, 140), uniform(rng, 30, 70), uniform(rng, 110, 160)};
  const double theta = uniform(rng, 0.0, kPi);
  const double c = std::cos(theta), s = std::sin(theta);

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(size) * size * 3);
  auto put = [&](int y, int x, const Rgb& v) {
    auto* p = &rgb[(static_cast<std::size_t>(y) * size + x) * 3];
    p[0] = static_cast<std::uint8_t>(std::clamp(std::lround(v.r), 0L, 255L));
    p[1] = static_cast<std::uint8_t>(std::clamp(std::lround(v.g), 0L, 255L));
    p[2] = static_cast<std::uint8_t>(std::clamp(std::lround(v.b), 0L, 255L));
  };

  // Square-wave stripes. The period separates the classes; phase and duty cycle are nuisance.
  const double period = label == 0 ? uniform(rng, 5.0, 7.0) : uniform(rng, 8.5, 11.0);
  const double phase = uniform(rng, 0.0, period);
  const double duty = uniform(rng, 0.35, 0.65) * period;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = x * c + y * s + phase;
      const double w = u - period * std::floor(u / period);  // [0, period)
      // Dark band is [0, duty), edges anti-aliased over one pixel.
      const double inside = std::min(w, duty - w);
      const double outside = std::min(w - duty, period - w);
      const double t = w < duty ? std::clamp(0.5 + inside, 0.0, 1.0) : std::clamp(0.5 - outside, 0.0, 1.0);
      put(y, x, mix(light, dark, t));
    }
  return from_interleaved_u8(rgb, size, size, 3);
}

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options) {
  if (options.tiles < 2 || options.patients < 3 || options.tile_size < 4 || options.tile_size % 2) {
    throw InvalidInput("synthetic corpus: need >= 2 tiles, >= 3 patients and an even tile size >= 4");
  }
  SyntheticCorpus corpus;
  std::vector<TileRecord> records;
  records.reserve(options.tiles);
  const auto& names = synthetic_class_names();
  for (int i = 0; i < options.tiles; ++i) {
    const int label = i % 2;
    const int patient = (i / 2) % options.patients;
    char pid[32];
    std::snprintf(pid, sizeof pid, "p%03d", patient);
    char path[96];
    std::snprintf(path, sizeof path, "%s/%s/%05d.png", names[label].c_str(), pid, i);
    auto image = synthetic_tile(label, options.tile_size, derive_seed(options.seed, static_cast<std::uint64_t>(i)));
    corpus.source.add(path, std::move(image));
    records.push_back(TileRecord{path, pid, label, Split::Train, 1.0});
  }
  corpus.manifest = split_by_patient(std::move(records), options.ratios, options.seed);
  corpus.manifest.class_names = names;
  corpus.manifest.tile_size = options.tile_size;
  corpus.manifest.central_size = options.tile_size / 2;
  return corpus;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  for (const auto& r : corpus.manifest.records) {
    const auto path = dir / r.image_path;
    std::filesystem::create_directories(path.parent_path());
    write_png_rgb(path, corpus.source.load(r));
  }
}

}  // namespace vfe::datakit
