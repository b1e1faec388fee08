#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rbc {

/// Row-major single-channel image with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, double fill = 0.0)
      : width_(width), height_(height), pixels_(width * height, fill) {}
  Image(std::size_t width, std::size_t height, std::vector<double> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != width_ * height_) throw std::invalid_argument("pixel count does not match dimensions");
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> pixels() noexcept { return pixels_; }

  double at(std::size_t x, std::size_t y) const { return pixels_[y * width_ + x]; }
  double& at(std::size_t x, std::size_t y) { return pixels_[y * width_ + x]; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

/// 8-bit quantization used on disk: round(v * 255).
std::vector<std::uint8_t> quantize(const Image& image);
Image dequantize(std::size_t width, std::size_t height, std::span<const std::uint8_t> bytes);

}  // namespace rbc
