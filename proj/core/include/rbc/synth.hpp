#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rbc/image.hpp"
#include "rbc/line.hpp"

namespace rbc {

/// Generator settings for the synthetic line dataset.
struct SynthConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t train_one_line = 2000;
  std::size_t train_two_line = 2000;
  std::size_t test_clear = 500;
  std::size_t test_ambiguous = 500;
  double noise_sigma = 0.1;
  double contrast = 0.5;
  double thickness = 1.5;
  double alpha_min = -std::numbers::pi / 3;
  double alpha_max = std::numbers::pi / 3;
  double min_visible_fraction = 0.5;  // of min(width, height)
  bool separate_pairs = true;
  double min_alpha_separation = 0.15;     // radians
  double min_rho_separation_frac = 0.1;   // of height

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

enum class Split { Train, TestClear, TestAmbiguous };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct SynthSample {
  Image image;
  std::vector<LineParams> lines;  // one or two
  std::size_t unimodal_label = 0;  // index into lines
  std::uint64_t seed = 0;

  const LineParams& label() const { return lines.at(unimodal_label); }
};

struct Dataset {
  SynthConfig config;
  std::uint64_t base_seed = 0;
  std::vector<SynthSample> train;
  std::vector<SynthSample> test_clear;
  std::vector<SynthSample> test_ambiguous;

  const std::vector<SynthSample>& split(Split s) const;
  std::vector<SynthSample>& split(Split s);
};

using Rng = std::mt19937_64;

/// Per-sample seed derived from (base_seed, split, index).
std::uint64_t derive_seed(std::uint64_t base_seed, Split split, std::size_t index);

/// Length of the part of the line inside [0, width-1] x [0, height-1].
double visible_length(const LineParams& line, std::size_t width, std::size_t height);

/// Uniform alpha on [alpha_min, alpha_max]; rho rejection-sampled until the
/// visible segment is long enough. Throws after 1000 failed attempts.
LineParams sample_line(Rng& rng, const SynthConfig& cfg);

struct RenderSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  std::vector<LineParams> lines;
  double noise_sigma = 0.1;
  double thickness = 1.5;
  double contrast = 0.5;
};

/// Gaussian-noise background around 0.5 plus anti-aliased lines.
Image render(const RenderSpec& spec, std::uint64_t seed);

/// Deterministic given (config, base_seed, split, index); images are
/// returned already quantized to 8 bits so they match what load_dataset sees.
SynthSample generate_sample(const SynthConfig& cfg, std::uint64_t base_seed, Split split, std::size_t index);

/// All three splits. The result does not depend on `workers`.
Dataset generate_dataset(const SynthConfig& cfg, std::uint64_t base_seed, std::size_t workers = 1);

struct ManifestRecord {
  Split split;
  std::size_t index;
  std::string file;  // relative to the dataset directory
  std::vector<LineParams> lines;
  std::size_t unimodal_index;
  std::uint64_t seed;
  std::uint32_t checksum;  // CRC-32 of the PGM file
};

struct DatasetManifest {
  SynthConfig config;
  std::uint64_t base_seed = 0;
  std::vector<ManifestRecord> records;

  std::size_t count(Split split) const;
};

/// Writes <dir>/manifest.csv and one PGM per sample under <dir>/<split>/.
DatasetManifest write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Accepts the dataset directory or the manifest path. Verifies counts and
/// checksums; throws FormatError naming the offending file.
Dataset load_dataset(const std::filesystem::path& path);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height, std::span<const std::uint8_t> bytes);
Image decode_pgm(std::span<const std::uint8_t> file_bytes, const std::string& name);

}  // namespace rbc
