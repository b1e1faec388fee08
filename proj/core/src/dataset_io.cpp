#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "checksum.hpp"
#include "rbc/error.hpp"
#include "rbc/synth.hpp"

namespace rbc {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.csv";
constexpr const char* kManifestHeader = "split,index,file,alpha0,rho0,alpha1,rho1,unimodal_index,seed,checksum";
constexpr const char* kFormatTag = "rbc-synth-lines";
constexpr int kFormatVersion = 1;

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

ordered_json config_to_json(const SynthConfig& c) {
  return ordered_json{
      {"width", c.width},
      {"height", c.height},
      {"train_one_line", c.train_one_line},
      {"train_two_line", c.train_two_line},
      {"test_clear", c.test_clear},
      {"test_ambiguous", c.test_ambiguous},
      {"noise_sigma", c.noise_sigma},
      {"contrast", c.contrast},
      {"thickness", c.thickness},
      {"alpha_min", c.alpha_min},
      {"alpha_max", c.alpha_max},
      {"min_visible_fraction", c.min_visible_fraction},
      {"separate_pairs", c.separate_pairs},
      {"min_alpha_separation", c.min_alpha_separation},
      {"min_rho_separation_frac", c.min_rho_separation_frac},
  };
}

SynthConfig config_from_json(const ordered_json& j) {
  SynthConfig c;
  c.width = j.at("width").get<std::size_t>();
  c.height = j.at("height").get<std::size_t>();
  c.train_one_line = j.at("train_one_line").get<std::size_t>();
  c.train_two_line = j.at("train_two_line").get<std::size_t>();
  c.test_clear = j.at("test_clear").get<std::size_t>();
  c.test_ambiguous = j.at("test_ambiguous").get<std::size_t>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.contrast = j.at("contrast").get<double>();
  c.thickness = j.at("thickness").get<double>();
  c.alpha_min = j.at("alpha_min").get<double>();
  c.alpha_max = j.at("alpha_max").get<double>();
  c.min_visible_fraction = j.at("min_visible_fraction").get<double>();
  c.separate_pairs = j.at("separate_pairs").get<bool>();
  c.min_alpha_separation = j.at("min_alpha_separation").get<double>();
  c.min_rho_separation_frac = j.at("min_rho_separation_frac").get<double>();
  return c;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing image file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t lineno) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("manifest line " + std::to_string(lineno) + ": bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t lineno, int base = 10) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, base);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("manifest line " + std::to_string(lineno) + ": bad integer '" + s + "'");
  }
  return v;
}

std::size_t expected_count(const SynthConfig& c, Split s) {
  switch (s) {
    case Split::Train: return c.train_one_line + c.train_two_line;
    case Split::TestClear: return c.test_clear;
    case Split::TestAmbiguous: return c.test_ambiguous;
  }
  return 0;
}

constexpr Split kSplits[] = {Split::Train, Split::TestClear, Split::TestAmbiguous};

}  // namespace

std::size_t DatasetManifest::count(Split split) const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.split == split;
  return n;
}

std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height, std::span<const std::uint8_t> bytes) {
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
  return out;
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, std::span<const std::uint8_t> bytes) {
  const auto data = encode_pgm(width, height, bytes);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw ConfigError("cannot write " + path.string());
}

Image decode_pgm(std::span<const std::uint8_t> file_bytes, const std::string& name) {
  std::string head(file_bytes.begin(), file_bytes.begin() + std::min<std::size_t>(file_bytes.size(), 64));
  std::istringstream in(head);
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  if (!(in >> magic >> width >> height >> maxval) || magic != "P5" || maxval != 255) {
    throw FormatError("bad PGM header in " + name);
  }
  const auto offset = static_cast<std::size_t>(in.tellg()) + 1;  // single whitespace after maxval
  if (file_bytes.size() != offset + width * height) throw FormatError("truncated PGM data in " + name);
  return dequantize(width, height, file_bytes.subspan(offset));
}

DatasetManifest write_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());

  DatasetManifest manifest{dataset.config, dataset.base_seed, {}};
  for (Split split : kSplits) {
    const fs::path sub = dir / std::string(to_string(split));
    fs::create_directories(sub, ec);
    if (ec) throw ConfigError("cannot create " + sub.string());
    const auto& samples = dataset.split(split);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.pgm", i);
      const std::string rel = std::string(to_string(split)) + "/" + name;
      const auto bytes = encode_pgm(s.image.width(), s.image.height(), quantize(s.image));
      {
        std::ofstream out(dir / rel, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigError("cannot write " + (dir / rel).string());
      }
      manifest.records.push_back({split, i, rel, s.lines, s.unimodal_label, s.seed, detail::crc32(bytes)});
    }
  }

  std::ofstream out(dir / kManifestName, std::ios::binary);
  const ordered_json header{{"format", kFormatTag},
                            {"version", kFormatVersion},
                            {"base_seed", dataset.base_seed},
                            {"config", config_to_json(dataset.config)}};
  out << "# " << header.dump() << '\n' << kManifestHeader << '\n';
  for (const auto& r : manifest.records) {
    out << to_string(r.split) << ',' << r.index << ',' << r.file << ',' << exact(r.lines[0].alpha) << ','
        << exact(r.lines[0].rho) << ',';
    if (r.lines.size() > 1) out << exact(r.lines[1].alpha) << ',' << exact(r.lines[1].rho);
    else out << ',';
    out << ',' << r.unimodal_index << ',' << r.seed << ',' << hex32(r.checksum) << '\n';
  }
  if (!out) throw ConfigError("cannot write manifest in " + dir.string());
  return manifest;
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw FormatError("manifest lacks a JSON header line");

  DatasetManifest manifest;
  try {
    const auto header = ordered_json::parse(line.substr(2));
    if (header.at("format") != kFormatTag || header.at("version") != kFormatVersion) {
      throw FormatError("unsupported manifest format");
    }
    manifest.base_seed = header.at("base_seed").get<std::uint64_t>();
    manifest.config = config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest header: ") + e.what());
  }

  if (!std::getline(in, line) || line != kManifestHeader) throw FormatError("unexpected manifest column header");
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": expected 10 columns, got " +
                        std::to_string(cells.size()));
    }
    ManifestRecord r;
    try {
      r.split = parse_split(cells[0]);
    } catch (const std::invalid_argument& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    r.index = parse_u64(cells[1], lineno);
    r.file = cells[2];
    r.lines.push_back({parse_double(cells[3], lineno), parse_double(cells[4], lineno)});
    if (!cells[5].empty() || !cells[6].empty()) {
      r.lines.push_back({parse_double(cells[5], lineno), parse_double(cells[6], lineno)});
    }
    r.unimodal_index = parse_u64(cells[7], lineno);
    if (r.unimodal_index >= r.lines.size()) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": unimodal index out of range");
    }
    r.seed = parse_u64(cells[8], lineno);
    r.checksum = static_cast<std::uint32_t>(parse_u64(cells[9], lineno, 16));
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

Dataset load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / kManifestName : path;
  const fs::path dir = manifest_path.parent_path();
  const DatasetManifest manifest = read_manifest(manifest_path);

  for (Split split : kSplits) {
    const std::size_t listed = manifest.count(split);
    const std::size_t expected = expected_count(manifest.config, split);
    if (listed != expected) {
      throw FormatError("manifest count mismatch for split " + std::string(to_string(split)) + ": " +
                        std::to_string(listed) + " records, config declares " + std::to_string(expected));
    }
    std::size_t on_disk = 0;
    const fs::path sub = dir / std::string(to_string(split));
    if (fs::is_directory(sub)) {
      for (const auto& entry : fs::directory_iterator(sub)) on_disk += entry.path().extension() == ".pgm";
    }
    if (on_disk != expected) {
      throw FormatError("split " + std::string(to_string(split)) + " has " + std::to_string(on_disk) +
                        " image files, manifest lists " + std::to_string(expected));
    }
  }

  Dataset data;
  data.config = manifest.config;
  data.base_seed = manifest.base_seed;
  for (Split split : kSplits) data.split(split).resize(manifest.count(split));
  std::map<Split, std::vector<char>> seen;
  for (Split split : kSplits) seen[split].assign(manifest.count(split), 0);

  for (const auto& r : manifest.records) {
    auto& slots = seen[r.split];
    if (r.index >= slots.size() || slots[r.index]) {
      throw FormatError("manifest index " + std::to_string(r.index) + " invalid or repeated in split " +
                        std::string(to_string(r.split)));
    }
    slots[r.index] = 1;
    const auto bytes = read_file(dir / r.file);
    if (detail::crc32(bytes) != r.checksum) throw FormatError("checksum mismatch for " + r.file);
    SynthSample s;
    s.image = decode_pgm(bytes, r.file);
    if (s.image.width() != manifest.config.width || s.image.height() != manifest.config.height) {
      throw FormatError("image " + r.file + " has unexpected dimensions");
    }
    s.lines = r.lines;
    s.unimodal_label = r.unimodal_index;
    s.seed = r.seed;
    data.split(r.split)[r.index] = std::move(s);
  }
  return data;
}

}  // namespace rbc
