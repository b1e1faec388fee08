#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbc/bins.hpp"
#include "rbc/image.hpp"
#include "rbc/losses.hpp"

namespace rbc {

struct ConvBlockSpec {
  std::size_t channels = 8;
  std::size_t kernel = 3;  // odd; padding is kernel / 2
  std::size_t stride = 2;
  double leaky_slope = 0.01;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

enum class Pooling {
  GlobalAverage,  // one feature per channel
  Flatten,        // the whole final feature map
};

std::string_view to_string(Pooling pooling);
Pooling parse_pooling(std::string_view name);

/// Conv blocks, pooling and a single linear layer producing 2K logits:
/// logits [0, K) feed the alpha head and [K, 2K) the rho head.
struct NetworkSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<ConvBlockSpec> conv = {{8}, {16}, {32}};
  Pooling pooling = Pooling::Flatten;
  std::size_t bins = 64;
  HeadKind head = HeadKind::Softplus;

  void validate() const;
  /// Spatial size (height, width) after conv block `i`.
  std::pair<std::size_t, std::size_t> output_dims(std::size_t i) const;
  std::size_t feature_width() const;
  std::size_t logit_count() const { return 2 * bins; }
  std::size_t param_count() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// A named contiguous range of the flat parameter vector.
struct ParamBlock {
  std::string name;  // conv0.weight, conv0.bias, ..., head.weight, head.bias
  std::size_t offset;
  std::size_t size;
};

std::vector<ParamBlock> param_layout(const NetworkSpec& spec);

class NetworkModel {
 public:
  /// All parameters start at zero; call initialize() for a trainable model.
  NetworkModel(NetworkSpec spec, GridPtr alpha_grid, GridPtr rho_grid);

  /// Fan-in scaled uniform weights, zero biases.
  void initialize(std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const GridPtr& alpha_grid() const noexcept { return alpha_grid_; }
  const GridPtr& rho_grid() const noexcept { return rho_grid_; }
  const std::vector<ParamBlock>& layout() const noexcept { return layout_; }
  const ParamBlock& block(std::string_view name) const;

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  std::span<double> params(std::string_view block_name);

 private:
  NetworkSpec spec_;
  GridPtr alpha_grid_;
  GridPtr rho_grid_;
  std::vector<ParamBlock> layout_;
  std::vector<double> params_;
};

/// The 2K raw logits for one image. Throws ConfigError on a dimension
/// mismatch and NumericError naming the layer on non-finite activations.
std::vector<double> forward_logits(const NetworkModel& model, const Image& image);

struct Prediction {
  Histogram alpha;
  Histogram rho;
};

Prediction forward(const NetworkModel& model, const Image& image);

/// Order-preserving batched forward; the result does not depend on workers.
std::vector<Prediction> predict_batch(const NetworkModel& model, std::span<const Image* const> images,
                                      std::size_t workers = 1);
std::vector<Prediction> predict_batch(const NetworkModel& model, std::span<const Image> images,
                                      std::size_t workers = 1);

struct LossConfig {
  LossKind kind = LossKind::W1;
  HingeConfig hinge;
};

struct Example {
  const Image* image;
  const Histogram* alpha_target;
  const Histogram* rho_target;
};

struct BackwardResult {
  double loss;               // batch mean of (alpha loss + rho loss)
  std::vector<double> grad;  // d loss / d params
};

/// Per-sample gradients are summed by a pairwise tree whose shape depends
/// only on the batch size, so the result is bit-identical for any workers.
BackwardResult backward(const NetworkModel& model, std::span<const Example> batch, const LossConfig& loss,
                        std::size_t workers = 1);

}  // namespace rbc
