#include "vfe/datakit/prepare.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "vfe/datakit/png_io.hpp"
#include "vfe/datakit/tissue.hpp"
#include "vfe/errors.hpp"

namespace fs = std::filesystem;

namespace vfe::datakit {

namespace {

struct ScannedTile {
  fs::path path;
  fs::path relative;
  std::string patient;
  std::optional<int> class_label;
  std::vector<std::uint8_t> saturation;
  int side = 0;
};

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

ThresholdScope parse_threshold_scope(std::string_view text) {
  if (text == "tile") return ThresholdScope::Tile;
  if (text == "patient") return ThresholdScope::Patient;
  if (text == "global") return ThresholdScope::Global;
  throw InvalidInput("unknown threshold scope '" + std::string(text) + "'");
}

int default_central_size(int tile_size) {
  int c = static_cast<int>(std::lround(tile_size * 86.0 / 224.0));
  if ((tile_size - c) % 2 != 0) --c;
  return std::max(c, tile_size % 2 == 0 ? 2 : 1);
}

PrepareResult prepare_manifest(const PrepareOptions& options, const fs::path& relative_to) {
  if (!fs::is_directory(options.tile_dir)) {
    throw InvalidInput("tile directory does not exist: " + options.tile_dir.string());
  }
  if (options.mask_dir && !fs::is_directory(*options.mask_dir)) {
    throw InvalidInput("mask directory does not exist: " + options.mask_dir->string());
  }
  if (options.mask_dir && options.class_dirs) {
    throw InvalidInput("labels come either from masks or from class directories, not both");
  }

  PrepareResult result;
  std::vector<std::string> class_names;
  std::vector<std::pair<fs::path, std::optional<int>>> patient_dirs;
  if (options.class_dirs) {
    for (const auto& cls : sorted_dirs(options.tile_dir)) {
      class_names.push_back(cls.filename().string());
      for (const auto& p : sorted_dirs(cls))
        patient_dirs.emplace_back(p, static_cast<int>(class_names.size()) - 1);
    }
  } else {
    for (const auto& p : sorted_dirs(options.tile_dir)) patient_dirs.emplace_back(p, std::nullopt);
    if (options.mask_dir) class_names = {"normal", "tumor"};
  }

  std::vector<ScannedTile> tiles;
  int tile_size = 0;
  for (const auto& [dir, label] : patient_dirs) {
    for (const auto& file : sorted_pngs(dir)) {
      ++result.scanned;
      ImageTensor rgb;
      try {
        rgb = read_png_rgb(file);
      } catch (const IoError&) {
        ++result.unreadable;
        continue;
      }
      if (rgb.height != rgb.width || (tile_size != 0 && rgb.height != tile_size)) {
        ++result.unreadable;
        continue;
      }
      tile_size = rgb.height;
      ScannedTile t;
      t.path = file;
      t.relative = fs::relative(file, options.tile_dir);
      t.patient = dir.filename().string();
      t.class_label = label;
      t.saturation = saturation_u8(rgb);
      t.side = rgb.height;
      tiles.push_back(std::move(t));
    }
  }
  if (tiles.empty()) throw InvalidInput("no readable tiles under " + options.tile_dir.string());

  const int central = options.central_size > 0 ? options.central_size : default_central_size(tile_size);

  // Pooled histograms per threshold scope.
  std::map<std::string, Histogram256> pooled;
  auto scope_key = [&](const ScannedTile& t, std::size_t i) {
    switch (options.threshold_scope) {
      case ThresholdScope::Tile: return std::to_string(i);
      case ThresholdScope::Patient: return t.patient;
      case ThresholdScope::Global: return std::string{};
    }
    return std::string{};
  };
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    auto& h = pooled[scope_key(tiles[i], i)];
    for (auto v : tiles[i].saturation) ++h[v];
  }
  std::map<std::string, int> thresholds;
  for (const auto& [key, h] : pooled) thresholds[key] = otsu_threshold(h);

  std::vector<TileRecord> records;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& t = tiles[i];
    const auto mask = threshold_mask(t.saturation, t.side, t.side, thresholds.at(scope_key(t, i)));
    const auto windows = grid_tiles(mask, t.side, t.side);
    const double fraction = windows.front().tissue_fraction;
    if (fraction < kMinTissueFraction) {
      ++result.discarded_background;
      continue;
    }
    TileRecord r;
    r.image_path = fs::relative(t.path, relative_to).generic_string();
    r.patient_id = t.patient;
    r.tissue_fraction = fraction;
    r.label = t.class_label;
    if (options.mask_dir) {
      const auto mask_path = *options.mask_dir / t.relative;
      bool tumor = false;
      if (fs::exists(mask_path)) {
        const auto tumor_mask = read_png_mask(mask_path);
        if (tumor_mask.height != t.side || tumor_mask.width != t.side) {
          throw InvalidInput("mask " + mask_path.string() + " does not match its tile size");
        }
        tumor = label_tile(tumor_mask, central);
      }
      r.label = tumor ? 1 : 0;
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw InvalidInput("every tile was discarded by the background rule");
  }
  if (options.balance) records = balance_classes(records, options.seed);

  result.manifest = split_by_patient(std::move(records), options.ratios, options.seed);
  result.manifest.class_names = std::move(class_names);
  result.manifest.tile_size = tile_size;
  result.manifest.central_size = central;
  return result;
}

}  // namespace vfe::datakit
