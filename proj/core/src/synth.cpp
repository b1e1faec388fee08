#include "rbc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>

#include "rbc/error.hpp"

namespace rbc {

namespace {

constexpr int kMaxAttempts = 1000;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool two_lines(Split split, std::size_t index, const SynthConfig& cfg) {
  switch (split) {
    case Split::Train: return index >= cfg.train_one_line;
    case Split::TestClear: return false;
    case Split::TestAmbiguous: return true;
  }
  return false;
}

std::size_t split_size(Split split, const SynthConfig& cfg) {
  switch (split) {
    case Split::Train: return cfg.train_one_line + cfg.train_two_line;
    case Split::TestClear: return cfg.test_clear;
    case Split::TestAmbiguous: return cfg.test_ambiguous;
  }
  return 0;
}

bool separated(const LineParams& a, const LineParams& b, const SynthConfig& cfg) {
  return std::abs(a.alpha - b.alpha) >= cfg.min_alpha_separation ||
         std::abs(a.rho - b.rho) >= cfg.min_rho_separation_frac * static_cast<double>(cfg.height);
}

}  // namespace

void SynthConfig::validate() const {
  if (width < 4 || height < 4) throw ConfigError("image dimensions must be at least 4x4");
  if (!(alpha_min < alpha_max) || alpha_min < -std::numbers::pi / 2 || alpha_max > std::numbers::pi / 2) {
    throw ConfigError("alpha range must be a non-empty subset of [-pi/2, pi/2]");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (!(thickness > 0.0)) throw ConfigError("thickness must be positive");
  if (!(min_visible_fraction >= 0.0)) throw ConfigError("min_visible_fraction must be >= 0");
  if (train_one_line + train_two_line == 0) throw ConfigError("training split is empty");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::TestClear: return "test_clear";
    case Split::TestAmbiguous: return "test_ambiguous";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test_clear") return Split::TestClear;
  if (name == "test_ambiguous") return Split::TestAmbiguous;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

const std::vector<SynthSample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::TestClear: return test_clear;
    case Split::TestAmbiguous: return test_ambiguous;
  }
  throw std::invalid_argument("unknown split");
}

std::vector<SynthSample>& Dataset::split(Split s) {
  return const_cast<std::vector<SynthSample>&>(std::as_const(*this).split(s));
}

std::uint64_t derive_seed(std::uint64_t base_seed, Split split, std::size_t index) {
  const std::uint64_t tag = static_cast<std::uint64_t>(split) + 1;
  return splitmix64(splitmix64(splitmix64(base_seed) ^ tag) ^ static_cast<std::uint64_t>(index));
}

double visible_length(const LineParams& line, std::size_t width, std::size_t height) {
  // Parametric form p0 + t d, clipped against the pixel-center rectangle.
  const double sx = std::sin(line.alpha), cx = std::cos(line.alpha);
  const double p0[2] = {-line.rho * sx, line.rho * cx};
  const double dir[2] = {cx, sx};
  const double hi[2] = {static_cast<double>(width) - 1.0, static_cast<double>(height) - 1.0};
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(dir[axis]) < 1e-12) {
      if (p0[axis] < 0.0 || p0[axis] > hi[axis]) return 0.0;
      continue;
    }
    double a = (0.0 - p0[axis]) / dir[axis];
    double b = (hi[axis] - p0[axis]) / dir[axis];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return std::max(t1 - t0, 0.0);
}

LineParams sample_line(Rng& rng, const SynthConfig& cfg) {
  std::uniform_real_distribution<double> alpha_dist(cfg.alpha_min, cfg.alpha_max);
  const double alpha = alpha_dist(rng);
  const double sx = std::sin(alpha), cx = std::cos(alpha);
  const double w = static_cast<double>(cfg.width) - 1.0;
  const double h = static_cast<double>(cfg.height) - 1.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : {0.0, w}) {
    for (double y : {0.0, h}) {
      const double proj = -x * sx + y * cx;
      lo = std::min(lo, proj);
      hi = std::max(hi, proj);
    }
  }
  lo = std::max(lo, 0.0);
  const double min_length =
      cfg.min_visible_fraction * static_cast<double>(std::min(cfg.width, cfg.height));
  std::uniform_real_distribution<double> rho_dist(lo, hi);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const LineParams line{alpha, rho_dist(rng)};
    if (visible_length(line, cfg.width, cfg.height) >= min_length) return line;
  }
  throw ConfigError("could not sample a visible line in " + std::to_string(kMaxAttempts) +
                    " attempts; check the image dimensions");
}

Image render(const RenderSpec& spec, std::uint64_t seed) {
  Image image(spec.width, spec.height, 0.5);
  if (spec.noise_sigma > 0.0) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.5, spec.noise_sigma);
    for (double& v : image.pixels()) v = std::clamp(noise(rng), 0.0, 1.0);
  }
  // Box-filtered coverage of a band of the given thickness.
  const double reach = 0.5 * spec.thickness + 0.5;
  for (const auto& line : spec.lines) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double d = line.distance(static_cast<double>(x), static_cast<double>(y));
        const double coverage = std::clamp(reach - d, 0.0, 1.0);
        if (coverage > 0.0) image.at(x, y) += spec.contrast * coverage;
      }
    }
  }
  for (double& v : image.pixels()) v = std::clamp(v, 0.0, 1.0);
  return image;
}

SynthSample generate_sample(const SynthConfig& cfg, std::uint64_t base_seed, Split split, std::size_t index) {
  SynthSample sample;
  sample.seed = derive_seed(base_seed, split, index);
  Rng rng(sample.seed);

  sample.lines.push_back(sample_line(rng, cfg));
  if (two_lines(split, index, cfg)) {
    LineParams second = sample_line(rng, cfg);
    for (int attempt = 1; cfg.separate_pairs && !separated(sample.lines[0], second, cfg); ++attempt) {
      if (attempt >= kMaxAttempts) throw ConfigError("could not sample a separated line pair");
      second = sample_line(rng, cfg);
    }
    sample.lines.push_back(second);
    sample.unimodal_label = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
  }

  RenderSpec spec{cfg.width, cfg.height, sample.lines, cfg.noise_sigma, cfg.thickness, cfg.contrast};
  const Image raw = render(spec, splitmix64(sample.seed ^ 0x5eedULL));
  sample.image = dequantize(cfg.width, cfg.height, quantize(raw));
  return sample;
}

Dataset generate_dataset(const SynthConfig& cfg, std::uint64_t base_seed, std::size_t workers) {
  cfg.validate();
  Dataset data;
  data.config = cfg;
  data.base_seed = base_seed;
  for (Split split : {Split::Train, Split::TestClear, Split::TestAmbiguous}) {
    auto& out = data.split(split);
    const std::size_t n = split_size(split, cfg);
    out.resize(n);
    auto fill = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) out[i] = generate_sample(cfg, base_seed, split, i);
    };
    const std::size_t w = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (w == 1) {
      fill(0, n);
      continue;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t begin = 0; begin < n; begin += chunk) pool.emplace_back(fill, begin, std::min(begin + chunk, n));
  }
  return data;
}

std::vector<std::uint8_t> quantize(const Image& image) {
  std::vector<std::uint8_t> out(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), out.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  return out;
}

Image dequantize(std::size_t width, std::size_t height, std::span<const std::uint8_t> bytes) {
  std::vector<double> pixels(bytes.size());
  std::transform(bytes.begin(), bytes.end(), pixels.begin(), [](std::uint8_t b) { return b / 255.0; });
  return Image(width, height, std::move(pixels));
}

}  // namespace rbc
