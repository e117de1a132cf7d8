#include "vfe/training/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vfe/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vfe::training {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are written in host order");

namespace {

constexpr char kMagic[7] = {'V', 'F', 'E', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json index = json::array();
  std::string blobs;
  for (const auto& [name, tensor] : ckpt.tensors) {
    const auto t = tensor.detach().to(torch::kFloat32).contiguous();
    index.push_back({{"name", name}, {"offset", blobs.size()}, {"shape", t.sizes().vec()}});
    blobs.append(reinterpret_cast<const char*>(t.data_ptr<float>()), t.numel() * sizeof(float));
  }
  const json header = {{"format_version", ckpt.format_version},
                       {"config_hash", ckpt.config_hash},
                       {"config", ckpt.config},
                       {"step", ckpt.step},
                       {"stage", ckpt.growth.stage},
                       {"alpha", ckpt.growth.alpha},
                       {"grown_stages", ckpt.grown_stages},
                       {"optimizer_steps", ckpt.optimizer_steps},
                       {"tensors", index}};
  const auto header_text = header.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  bytes.push_back(static_cast<char>(ckpt.format_version));
  put_u64(bytes, header_text.size());
  bytes += header_text;
  bytes += blobs;

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + 9 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleCheckpoint(path.string() + " is not a checkpoint file");
  }
  const auto version = static_cast<std::uint8_t>(bytes[sizeof(kMagic)]);
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpoint(path.string() + " has format version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = get_u64(bytes.data() + sizeof(kMagic) + 1);
  const std::size_t header_start = sizeof(kMagic) + 9;
  if (header_len > bytes.size() - header_start) throw IoError(path.string() + ": truncated header");

  Checkpoint ckpt;
  try {
    const auto header = json::parse(bytes.substr(header_start, header_len));
    ckpt.format_version = version;
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.growth.stage = header.at("stage").get<std::int64_t>();
    ckpt.growth.alpha = header.at("alpha").get<double>();
    ckpt.grown_stages = header.at("grown_stages").get<std::int64_t>();
    ckpt.optimizer_steps = header.at("optimizer_steps");

    const std::size_t blob_start = header_start + header_len;
    const std::size_t blob_size = bytes.size() - blob_start;
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      std::int64_t numel = 1;
      for (auto d : shape) numel *= d;
      const auto nbytes = static_cast<std::size_t>(numel) * sizeof(float);
      if (offset > blob_size || nbytes > blob_size - offset) {
        throw IoError(path.string() + ": blob '" + name + "' runs past the end of the file");
      }
      auto t = torch::empty(shape, torch::kFloat32);
      std::memcpy(t.data_ptr<float>(), bytes.data() + blob_start + offset, nbytes);
      ckpt.tensors.emplace_back(name, std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  return ckpt;
}

}  // namespace vfe::training
