#include "vfe/eval/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include <json.hpp>

#include "vfe/errors.hpp"

namespace vfe::eval {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "embeddings are written in host order");

Eigen::MatrixXd Embeddings::matrix() const {
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      values.data(), n, d);
  return m.cast<double>();
}

Embeddings compute_embeddings(const Embedder& embedder, const datakit::Manifest& manifest,
                              datakit::Split split, const datakit::TileSource& source,
                              std::int64_t chunk) {
  const auto records = manifest.split_records(split);
  Embeddings e;
  e.n = static_cast<std::int64_t>(records.size());
  e.d = embedder.dim();
  e.class_names = manifest.class_names;
  e.values.resize(static_cast<std::size_t>(e.n * e.d));
  e.labels.reserve(records.size());
  chunk = std::max<std::int64_t>(1, chunk);
  for (std::int64_t start = 0; start < e.n; start += chunk) {
    const auto stop = std::min(e.n, start + chunk);
    std::vector<datakit::ImageTensor> crops;
    crops.reserve(stop - start);
    for (auto i = start; i < stop; ++i) crops.push_back(datakit::center_crop(source.load(records[i])));
    const Eigen::MatrixXf codes = embedder.embed(crops);
    if (codes.rows() != stop - start || codes.cols() != e.d) {
      throw InvalidInput("embedder returned a matrix of unexpected shape");
    }
    for (auto i = start; i < stop; ++i)
      for (std::int64_t j = 0; j < e.d; ++j) e.values[i * e.d + j] = codes(i - start, j);
  }
  for (const auto& r : records) e.labels.push_back(r.label.value_or(-1));
  return e;
}

fs::path embeddings_sidecar(const fs::path& path) {
  auto p = path;
  p.replace_extension(".json");
  if (p == path) p += ".json";
  return p;
}

void write_embeddings(const fs::path& path, const Embeddings& e) {
  if (e.values.size() != static_cast<std::size_t>(e.n * e.d) ||
      e.labels.size() != static_cast<std::size_t>(e.n)) {
    throw InvalidInput("embeddings: inconsistent shape");
  }
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path.string());
  }
  nlohmann::json side = {{"n", e.n}, {"d", e.d}, {"labels", e.labels}, {"class_names", e.class_names}};
  const auto sidecar = embeddings_sidecar(path);
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot open " + sidecar.string() + " for writing");
  out << side.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + sidecar.string());
}

Embeddings read_embeddings(const fs::path& path) {
  const auto sidecar = embeddings_sidecar(path);
  std::ifstream side_in(sidecar);
  if (!side_in) throw IoError("cannot open " + sidecar.string());
  Embeddings e;
  try {
    const auto side = nlohmann::json::parse(side_in);
    e.n = side.at("n").get<std::int64_t>();
    e.d = side.at("d").get<std::int64_t>();
    e.labels = side.at("labels").get<std::vector<int>>();
    e.class_names = side.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& ex) {
    throw IoError("malformed embeddings sidecar " + sidecar.string() + ": " + ex.what());
  }
  if (e.n < 0 || e.d < 0 || e.labels.size() != static_cast<std::size_t>(e.n)) {
    throw IoError("inconsistent embeddings sidecar " + sidecar.string());
  }
  const auto expected = static_cast<std::uintmax_t>(e.n * e.d) * sizeof(float);
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  if (size != expected) throw IoError("embeddings file " + path.string() + " has the wrong size");
  e.values.resize(static_cast<std::size_t>(e.n * e.d));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("read failed: " + path.string());
  return e;
}

Embeddings export_embeddings(const Embedder& embedder, const datakit::Manifest& manifest,
                             datakit::Split split, const datakit::TileSource& source,
                             const fs::path& path) {
  auto e = compute_embeddings(embedder, manifest, split, source);
  write_embeddings(path, e);
  return e;
}

}  // namespace vfe::eval
