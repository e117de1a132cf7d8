#include "vfe/datakit/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vfe/datakit/random.hpp"
#include "vfe/errors.hpp"

namespace vfe::datakit {

namespace {

constexpr std::string_view kHeader = "image_path,patient_id,label,split,tissue_fraction";
constexpr std::uint64_t kSplitStream = 0x53504c4954ULL;
constexpr std::uint64_t kBalanceStream = 0x42414c414e4345ULL;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw InvalidInput("manifest line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string format_fraction(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw InvalidInput("unknown split '" + std::string(text) + "' (expected train, val or test)");
}

std::vector<TileRecord> Manifest::split_records(Split split) const {
  std::vector<TileRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const TileRecord& r) { return r.split == split; });
  return out;
}

void Manifest::validate() const {
  for (const auto& r : records) {
    if (r.label && (*r.label < 0 || *r.label >= static_cast<int>(class_names.size()))) {
      throw InvalidInput("record " + r.image_path + " has label " + std::to_string(*r.label) +
                         " outside class_names (" + std::to_string(class_names.size()) + ")");
    }
  }
}

std::array<int, 3> allocate_patients(int patient_count, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  if (std::any_of(r.begin(), r.end(), [](double v) { return !(v > 0.0); })) {
    throw InvalidInput("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw InvalidInput("split ratios must sum to 1");
  if (patient_count < 3) {
    throw InvalidInput("patient-wise split needs at least 3 patients, got " +
                       std::to_string(patient_count));
  }

  std::array<int, 3> counts{};
  std::array<double, 3> remainder{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = r[i] * patient_count;
    counts[i] = static_cast<int>(std::floor(quota + 1e-9));
    remainder[i] = quota - counts[i];
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return remainder[a] > remainder[b] + 1e-9;
  });
  for (int k = 0; assigned < patient_count; k = (k + 1) % 3, ++assigned) ++counts[order[k]];

  for (int i = 0; i < 3; ++i) {
    if (counts[i] > 0) continue;
    const auto donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    --counts[donor];
    counts[i] = 1;
  }
  return counts;
}

Manifest split_by_patient(std::vector<TileRecord> records, const SplitRatios& ratios,
                          std::uint64_t seed) {
  std::set<std::string> distinct;
  for (const auto& r : records) distinct.insert(r.patient_id);
  std::vector<std::string> patients(distinct.begin(), distinct.end());
  const auto counts = allocate_patients(static_cast<int>(patients.size()), ratios);

  std::mt19937_64 rng(derive_seed(seed, kSplitStream));
  shuffle_in_place(patients, rng);

  std::map<std::string, Split> assignment;
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < counts[s]; ++i) assignment[patients[k++]] = static_cast<Split>(s);

  for (auto& r : records) r.split = assignment.at(r.patient_id);

  Manifest m;
  m.records = std::move(records);
  m.seed = seed;
  return m;
}

std::vector<TileRecord> balance_classes(const std::vector<TileRecord>& records, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].label) by_class[*records[i].label].push_back(i);
  if (by_class.size() < 2) return records;

  std::size_t smallest = records.size();
  for (const auto& [label, idx] : by_class) smallest = std::min(smallest, idx.size());

  std::vector<bool> keep(records.size(), true);
  std::mt19937_64 rng(derive_seed(seed, kBalanceStream));
  for (auto& [label, idx] : by_class) {
    shuffle_in_place(idx, rng);
    for (std::size_t j = smallest; j < idx.size(); ++j) keep[idx[j]] = false;
  }
  std::vector<TileRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (keep[i]) out.push_back(records[i]);
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& csv_path) {
  manifest.validate();
  std::ostringstream csv;
  csv << kHeader << '\n';
  for (const auto& r : manifest.records) {
    csv << csv_field(r.image_path) << ',' << csv_field(r.patient_id) << ','
        << (r.label ? std::to_string(*r.label) : std::string{}) << ',' << to_string(r.split) << ','
        << format_fraction(r.tissue_fraction) << '\n';
  }
  nlohmann::json side = {{"class_names", manifest.class_names},
                         {"seed", manifest.seed},
                         {"tile_size", manifest.tile_size},
                         {"central_size", manifest.central_size}};

  auto write_file = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
  };
  write_file(csv_path, csv.str());
  write_file(sidecar_path(csv_path), side.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + csv_path.string());
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  // Lines may end in CRLF.
  std::getline(in, line);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw InvalidInput("manifest " + csv_path.string() + ": unexpected header");

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = parse_csv_line(line, line_no);
    if (f.size() != 5) {
      throw InvalidInput("manifest line " + std::to_string(line_no) + ": expected 5 fields");
    }
    TileRecord r;
    r.image_path = f[0];
    r.patient_id = f[1];
    if (!f[2].empty()) {
      int label = 0;
      auto [p, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), label);
      if (ec != std::errc{} || p != f[2].data() + f[2].size()) {
        throw InvalidInput("manifest line " + std::to_string(line_no) + ": bad label '" + f[2] + "'");
      }
      r.label = label;
    }
    r.split = parse_split(f[3]);
    auto [p, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.tissue_fraction);
    if (ec != std::errc{}) {
      throw InvalidInput("manifest line " + std::to_string(line_no) + ": bad tissue_fraction");
    }
    m.records.push_back(std::move(r));
  }

  const auto side_path = sidecar_path(csv_path);
  std::ifstream side_in(side_path);
  if (!side_in) throw IoError("cannot open manifest sidecar " + side_path.string());
  try {
    const auto side = nlohmann::json::parse(side_in);
    m.class_names = side.at("class_names").get<std::vector<std::string>>();
    m.seed = side.at("seed").get<std::uint64_t>();
    m.tile_size = side.value("tile_size", 0);
    m.central_size = side.value("central_size", 0);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("manifest sidecar " + side_path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace vfe::datakit
