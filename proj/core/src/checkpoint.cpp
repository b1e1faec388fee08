#include "rbc/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "checksum.hpp"
#include "rbc/error.hpp"

namespace rbc {

namespace {

constexpr char kMagic[4] = {'R', 'B', 'C', 'K'};

std::string exact(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("checkpoint spec: bad number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw FormatError("checkpoint spec: bad integer '" + s + "'");
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

std::string conv_text(const std::vector<ConvBlockSpec>& conv) {
  std::string out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(conv[i].channels) + ':' + std::to_string(conv[i].kernel) + ':' +
           std::to_string(conv[i].stride) + ':' + exact(conv[i].leaky_slope);
  }
  return out;
}

std::string edges_text(const BinGrid& grid) {
  std::string out;
  for (std::size_t i = 0; i < grid.edges().size(); ++i) {
    if (i) out += ',';
    out += exact(grid.edges()[i]);
  }
  return out;
}

std::string layout_text(const std::vector<ParamBlock>& layout) {
  std::string out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i) out += ';';
    out += layout[i].name + ':' + std::to_string(layout[i].offset) + ':' + std::to_string(layout[i].size);
  }
  return out;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> parse_block(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint spec: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& field(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint spec: missing field '" + key + "'");
  return it->second;
}

NetworkSpec spec_from_block(const std::map<std::string, std::string>& kv) {
  NetworkSpec spec;
  spec.height = parse_size(field(kv, "height"));
  spec.width = parse_size(field(kv, "width"));
  spec.conv.clear();
  for (const auto& item : split(field(kv, "conv"), ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 4) throw FormatError("checkpoint spec: malformed conv block '" + item + "'");
    spec.conv.push_back({parse_size(parts[0]), parse_size(parts[1]), parse_size(parts[2]), parse_double(parts[3])});
  }
  try {
    spec.pooling = parse_pooling(field(kv, "pooling"));
    spec.head = parse_head_kind(field(kv, "head"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint spec: ") + e.what());
  }
  spec.bins = parse_size(field(kv, "bins"));
  return spec;
}

GridPtr grid_from_text(const std::string& text) {
  std::vector<double> edges;
  for (const auto& e : split(text, ',')) edges.push_back(parse_double(e));
  try {
    return share(BinGrid(std::move(edges)));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint spec: ") + e.what());
  }
}

void compare_spec(const NetworkSpec& found, const NetworkSpec& expected) {
  auto check = [](bool same, const char* name, const std::string& got, const std::string& want) {
    if (!same) throw SpecMismatchError(name, "checkpoint has " + got + ", expected " + want);
  };
  check(found.height == expected.height, "height", std::to_string(found.height), std::to_string(expected.height));
  check(found.width == expected.width, "width", std::to_string(found.width), std::to_string(expected.width));
  check(found.conv == expected.conv, "conv", conv_text(found.conv), conv_text(expected.conv));
  check(found.pooling == expected.pooling, "pooling", std::string(to_string(found.pooling)),
        std::string(to_string(expected.pooling)));
  check(found.bins == expected.bins, "bins", std::to_string(found.bins), std::to_string(expected.bins));
  check(found.head == expected.head, "head", std::string(to_string(found.head)), std::string(to_string(expected.head)));
}

}  // namespace

std::string describe_spec(const NetworkSpec& spec) {
  std::string out;
  out += "height=" + std::to_string(spec.height) + '\n';
  out += "width=" + std::to_string(spec.width) + '\n';
  out += "conv=" + conv_text(spec.conv) + '\n';
  out += "pooling=" + std::string(to_string(spec.pooling)) + '\n';
  out += "bins=" + std::to_string(spec.bins) + '\n';
  out += "head=" + std::string(to_string(spec.head)) + '\n';
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const NetworkModel& model) {
  std::string block = describe_spec(model.spec());
  block += "alpha_edges=" + edges_text(*model.alpha_grid()) + '\n';
  block += "rho_edges=" + edges_text(*model.rho_grid()) + '\n';
  block += "layout=" + layout_text(model.layout()) + '\n';

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(block.size()));
  out.insert(out.end(), block.begin(), block.end());
  put<std::uint64_t>(out, model.params().size());
  for (double p : model.params()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p));
  put<std::uint32_t>(out, detail::crc32(out));
  return out;
}

NetworkModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint file");
  if (bytes.size() < 4 + 4 + 4 + 8 + 4) throw FormatError("checkpoint is truncated");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (detail::crc32(std::span(bytes).first(bytes.size() - 4)) != stored_crc) {
    throw FormatError("checkpoint checksum mismatch");
  }

  Reader r(bytes);
  r.text(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto block_len = r.get<std::uint32_t>();
  const auto kv = parse_block(r.text(block_len));
  const NetworkSpec spec = spec_from_block(kv);
  NetworkModel model = [&] {
    try {
      return NetworkModel(spec, grid_from_text(field(kv, "alpha_edges")), grid_from_text(field(kv, "rho_edges")));
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint spec: ") + e.what());
    }
  }();
  if (field(kv, "layout") != layout_text(model.layout())) {
    throw FormatError("checkpoint parameter layout does not match its spec");
  }
  const auto count = r.get<std::uint64_t>();
  if (count != model.params().size()) throw FormatError("checkpoint parameter count does not match its spec");
  for (double& p : model.params()) p = std::bit_cast<double>(r.get<std::uint64_t>());
  if (r.pos() + 4 != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const NetworkModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
}

NetworkModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

NetworkModel load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected) {
  NetworkModel model = load_checkpoint(path);
  compare_spec(model.spec(), expected);
  return model;
}

}  // namespace rbc
