#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>

#include "rbc/error.hpp"
#include "rbc/synth.hpp"

namespace fs = std::filesystem;

namespace rbc {
namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rbc_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SynthConfig small_config() {
  SynthConfig c;
  c.train_one_line = 6;
  c.train_two_line = 6;
  c.test_clear = 4;
  c.test_ambiguous = 4;
  return c;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Brute-force visible length: sample the line densely and keep the points
// that land inside the image rectangle.
double sampled_visible_length(const LineParams& l, double w, double h) {
  const double dx = std::cos(l.alpha), dy = std::sin(l.alpha);
  const double x0 = -l.rho * std::sin(l.alpha), y0 = l.rho * std::cos(l.alpha);
  const double span = 4.0 * (w + h);
  const int steps = 200000;
  int inside = 0;
  for (int i = 0; i <= steps; ++i) {
    const double t = -span + 2.0 * span * i / steps;
    const double x = x0 + t * dx, y = y0 + t * dy;
    inside += x >= 0 && x <= w - 1 && y >= 0 && y <= h - 1;
  }
  return 2.0 * span * inside / steps;
}

TEST(SampleLine, VisibleSegmentLongEnough) {
  const SynthConfig c;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const LineParams l = sample_line(rng, c);
    ASSERT_TRUE(l.valid());
    const double oracle = sampled_visible_length(l, 64, 64);
    EXPECT_NEAR(visible_length(l, 64, 64), oracle, 0.05);
    EXPECT_GE(oracle, 0.5 * 64 - 0.05);
  }
}

TEST(SampleLine, Deterministic) {
  Rng a(99), b(99);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_line(a, {}), sample_line(b, {}));
}

TEST(SampleLine, AlphaIsUniform) {
  const SynthConfig c;
  Rng rng(5);
  constexpr int kBins = 20, kDraws = 10000;
  std::vector<double> counts(kBins, 0.0);
  for (int i = 0; i < kDraws; ++i) {
    const double u = (sample_line(rng, c).alpha - c.alpha_min) / (c.alpha_max - c.alpha_min);
    ++counts[std::min(kBins - 1, static_cast<int>(u * kBins))];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(kDraws) / kBins;
  for (double n : counts) chi2 += (n - expected) * (n - expected) / expected;
  const boost::math::chi_squared dist(kBins - 1);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01);
}

TEST(Render, EmptyNoiselessIsFlat) {
  RenderSpec s;
  s.noise_sigma = 0.0;
  const Image img = render(s, 3);
  for (double v : img.pixels()) EXPECT_EQ(v, 0.5);
}

TEST(Render, HorizontalLineBrightensMiddleRow) {
  RenderSpec s;
  s.noise_sigma = 0.0;
  s.lines = {{0.0, 32.0}};
  const Image img = render(s, 3);
  std::vector<double> row_mean(64, 0.0);
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) row_mean[y] += img.at(x, y) / 64;
  }
  const auto peak = std::max_element(row_mean.begin(), row_mean.end()) - row_mean.begin();
  EXPECT_EQ(peak, 32);
  EXPECT_NEAR(row_mean[31], row_mean[33], 1e-12);
  EXPECT_EQ(row_mean[5], 0.5);
}

TEST(Render, SameSeedSamePixels) {
  RenderSpec s;
  s.lines = {{0.2, 20.0}};
  EXPECT_EQ(render(s, 8), render(s, 8));
  EXPECT_NE(render(s, 8), render(s, 9));
}

TEST(GenerateDataset, DefaultCounts) {
  const SynthConfig c;
  EXPECT_EQ(c.train_one_line + c.train_two_line, 4000u);
  EXPECT_EQ(c.test_clear, 500u);
  EXPECT_EQ(c.test_ambiguous, 500u);
}

TEST(GenerateDataset, SplitShapes) {
  const Dataset d = generate_dataset(small_config(), 4);
  ASSERT_EQ(d.train.size(), 12u);
  ASSERT_EQ(d.test_clear.size(), 4u);
  ASSERT_EQ(d.test_ambiguous.size(), 4u);
  for (const auto& s : d.test_clear) EXPECT_EQ(s.lines.size(), 1u);
  for (const auto& s : d.test_ambiguous) EXPECT_EQ(s.lines.size(), 2u);
  std::size_t two = 0;
  for (const auto& s : d.train) two += s.lines.size() == 2;
  EXPECT_EQ(two, 6u);
}

TEST(GenerateDataset, WorkersDoNotMatter) {
  const Dataset a = generate_dataset(small_config(), 4, 1), b = generate_dataset(small_config(), 4, 3);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].image, b.train[i].image);
}

TEST(GenerateDataset, UnimodalLabelBalanced) {
  SynthConfig c = small_config();
  c.test_ambiguous = 1000;
  c.width = c.height = 16;
  c.train_one_line = c.train_two_line = c.test_clear = 1;
  const Dataset d = generate_dataset(c, 11);
  double ones = 0.0;
  for (const auto& s : d.test_ambiguous) {
    ASSERT_LT(s.unimodal_label, 2u);
    ones += s.unimodal_label;
  }
  EXPECT_NEAR(ones / 1000, 0.5, 0.05);
}

TEST(DatasetIo, RoundTripAndByteIdenticalRerun) {
  const fs::path a = scratch_dir("io_a"), b = scratch_dir("io_b");
  const Dataset d = generate_dataset(small_config(), 21);
  write_dataset(d, a);
  write_dataset(generate_dataset(small_config(), 21), b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  }
  const Dataset back = load_dataset(a / "manifest.csv");
  ASSERT_EQ(back.train.size(), d.train.size());
  for (Split s : {Split::Train, Split::TestClear, Split::TestAmbiguous}) {
    for (std::size_t i = 0; i < d.split(s).size(); ++i) {
      EXPECT_EQ(back.split(s)[i].image, d.split(s)[i].image);
      EXPECT_EQ(back.split(s)[i].lines, d.split(s)[i].lines);
      EXPECT_EQ(back.split(s)[i].unimodal_label, d.split(s)[i].unimodal_label);
    }
  }
  EXPECT_EQ(back.config, d.config);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(DatasetIo, TruncatedImageNamesFile) {
  const fs::path dir = scratch_dir("trunc");
  write_dataset(generate_dataset(small_config(), 2), dir);
  const fs::path victim = dir / "test_clear" / "000001.pgm";
  fs::resize_file(victim, fs::file_size(victim) - 10);
  try {
    load_dataset(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("000001.pgm"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(DatasetIo, CountMismatchIsStructuredError) {
  const fs::path dir = scratch_dir("count");
  write_dataset(generate_dataset(small_config(), 2), dir);
  std::ifstream in(dir / "manifest.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  lines.pop_back();
  std::ofstream out(dir / "manifest.csv");
  for (const auto& l : lines) out << l << '\n';
  out.close();
  EXPECT_THROW(load_dataset(dir), FormatError);
  fs::remove_all(dir);
}

TEST(Pgm, RejectsBadHeader) {
  const std::vector<std::uint8_t> bytes = {'P', '2', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 0};
  EXPECT_THROW(decode_pgm(bytes, "x.pgm"), FormatError);
  const std::vector<std::uint8_t> px = {1, 2, 3, 4};
  const auto ok = encode_pgm(2, 2, px);
  EXPECT_EQ(decode_pgm(ok, "ok.pgm"), dequantize(2, 2, px));
}

TEST(Quantize, RoundTrip) {
  const Image img(3, 1, std::vector<double>{0.0, 0.5, 1.0});
  const auto q = quantize(img);
  EXPECT_EQ(q, (std::vector<std::uint8_t>{0, 128, 255}));
}

}  // namespace
}  // namespace rbc
