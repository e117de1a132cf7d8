#include "vfe/eval/fid.hpp"

#include <algorithm>
#include <cmath>

#include "vfe/errors.hpp"

namespace vfe::eval {

using datakit::ImageTensor;

Eigen::MatrixXd PixelMeanExtractor::extract(std::span<const ImageTensor> images) const {
  if (images.empty()) return {};
  const int c = images.front().channels;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), c);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.channels != c) throw InvalidInput("pixel_mean: mixed channel counts");
    const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += im.data[ch * plane + k];
      out(i, ch) = s / static_cast<double>(plane);
    }
  }
  return out;
}

Eigen::MatrixXd ChannelStatsExtractor::extract(std::span<const ImageTensor> images) const {
  if (images.empty()) return {};
  const int c = images.front().channels;
  constexpr int kPerChannel = 8;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), c * kPerChannel);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.channels != c) throw InvalidInput("channel_stats: mixed channel counts");
    const int h = im.height, w = im.width;
    if (h < 2 || w < 2) throw InvalidInput("channel_stats: images must be at least 2x2");
    for (int ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) sum += im.at(ch, y, x);
      const double mean = sum / (h * w);
      double var = 0.0, dx = 0.0, dy = 0.0;
      double quad[4] = {0.0, 0.0, 0.0, 0.0};
      int quad_n[4] = {0, 0, 0, 0};
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double v = im.at(ch, y, x);
          var += (v - mean) * (v - mean);
          if (x + 1 < w) dx += std::abs(im.at(ch, y, x + 1) - v);
          if (y + 1 < h) dy += std::abs(im.at(ch, y + 1, x) - v);
          const int q = (y >= h / 2 ? 2 : 0) + (x >= w / 2 ? 1 : 0);
          quad[q] += v;
          ++quad_n[q];
        }
      }
      auto row = out.row(i).segment(ch * kPerChannel, kPerChannel);
      row[0] = mean;
      row[1] = std::sqrt(var / (h * w));
      row[2] = dx / (h * (w - 1));
      row[3] = dy / ((h - 1) * w);
      for (int q = 0; q < 4; ++q) row[4 + q] = quad[q] / quad_n[q];
    }
  }
  return out;
}

Eigen::MatrixXd extract_features(const FeatureExtractor& extractor,
                                 std::span<const ImageTensor> images, std::int64_t chunk) {
  const auto n = static_cast<std::int64_t>(images.size());
  if (n == 0) return {};
  chunk = std::max<std::int64_t>(1, chunk);
  Eigen::MatrixXd out;
  for (std::int64_t start = 0; start < n; start += chunk) {
    const auto stop = std::min(n, start + chunk);
    const Eigen::MatrixXd part = extractor.extract(images.subspan(start, stop - start));
    if (part.rows() != stop - start) throw InvalidInput("feature extractor returned wrong row count");
    if (start == 0) out.resize(n, part.cols());
    if (part.cols() != out.cols()) throw InvalidInput("feature extractor changed dimension");
    out.middleRows(start, stop - start) = part;
  }
  return out;
}

std::vector<ImageTensor> load_split(const datakit::Manifest& manifest, datakit::Split split,
                                    const datakit::TileSource& source) {
  std::vector<ImageTensor> out;
  for (const auto& r : manifest.split_records(split)) out.push_back(source.load(r));
  return out;
}

double fid_between(const FeatureExtractor& extractor, std::span<const ImageTensor> a,
                   std::span<const ImageTensor> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidInput("fid needs at least 2 images per set");
  return frechet_distance(gaussian_stats(extract_features(extractor, a)),
                          gaussian_stats(extract_features(extractor, b)));
}

double fid_sampled(const ImageGenerator& generator, const FeatureExtractor& extractor,
                   const datakit::Manifest& manifest, const datakit::TileSource& source,
                   std::int64_t n, std::uint64_t seed, const FidOptions& options) {
  if (n < 2) throw InvalidInput("fid_sampled needs n >= 2, got " + std::to_string(n));
  const auto real = load_split(manifest, options.real_split, source);
  if (real.size() < 2) throw InvalidInput("fid: real split has fewer than 2 tiles");
  const auto generated = generator.sample(n, seed);
  return fid_between(extractor, generated, real);
}

double fid_expanded(const ImageGenerator& generator, const FeatureExtractor& extractor,
                    const datakit::Manifest& manifest, const datakit::TileSource& source,
                    const FidOptions& options) {
  const auto tiles = load_split(manifest, options.eval_split, source);
  if (tiles.empty()) {
    throw InvalidInput("fid_expanded: split '" + std::string(datakit::to_string(options.eval_split)) + "' is empty");
  }
  const auto real = load_split(manifest, options.real_split, source);
  if (real.size() < 2) throw InvalidInput("fid: real split has fewer than 2 tiles");
  const auto expanded = generator.expand(tiles);
  return fid_between(extractor, expanded, real);
}

}  // namespace vfe::eval
