#include "rbc/network.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/Core>

#include "rbc/error.hpp"

namespace rbc {

namespace {

struct Shape {
  std::size_t c, h, w;
  std::size_t size() const { return c * h * w; }
};

struct ConvGeom {
  Shape in, out;
  std::size_t k, stride, pad;
  double slope;
};

std::vector<ConvGeom> conv_geometry(const NetworkSpec& spec) {
  std::vector<ConvGeom> geoms;
  Shape cur{1, spec.height, spec.width};
  for (const auto& b : spec.conv) {
    const std::size_t pad = b.kernel / 2;
    Shape out{b.channels, (cur.h + 2 * pad - b.kernel) / b.stride + 1, (cur.w + 2 * pad - b.kernel) / b.stride + 1};
    geoms.push_back({cur, out, b.kernel, b.stride, pad, b.leaky_slope});
    cur = out;
  }
  return geoms;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Unfolds the zero-padded input so that the convolution becomes
// W (out_c x in_c*k*k) times cols (in_c*k*k x out_h*out_w).
void im2col(const ConvGeom& g, const double* in, double* cols) {
  const std::size_t plane = g.out.h * g.out.w;
  for (std::size_t ci = 0; ci < g.in.c; ++ci) {
    const double* src = in + ci * g.in.h * g.in.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((ci * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.out.h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out.w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && iy < static_cast<long>(g.in.h) && ix >= 0 && ix < static_cast<long>(g.in.w);
            row[oy * g.out.w + ox] = inside ? src[iy * static_cast<long>(g.in.w) + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeom& g, const double* cols, double* d_in) {
  const std::size_t plane = g.out.h * g.out.w;
  for (std::size_t ci = 0; ci < g.in.c; ++ci) {
    double* dst = d_in + ci * g.in.h * g.in.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((ci * g.k + ky) * g.k + kx) * plane;
        for (std::size_t oy = 0; oy < g.out.h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.in.h)) continue;
          for (std::size_t ox = 0; ox < g.out.w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.in.w)) continue;
            dst[iy * static_cast<long>(g.in.w) + ix] += row[oy * g.out.w + ox];
          }
        }
      }
    }
  }
}

std::size_t col_rows(const ConvGeom& g) { return g.in.c * g.k * g.k; }

void check_finite(std::span<const double> values, const std::string& layer) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite activation in layer " + layer);
  }
}

// Activations of one forward pass, kept for the backward pass.
struct Trace {
  std::vector<std::vector<double>> cols;  // im2col of each conv input
  std::vector<std::vector<double>> pre;   // conv pre-activations
  std::vector<std::vector<double>> post;  // post[0] is the input, post[i+1] follows conv i
  std::vector<double> features;
  std::vector<double> logits;
};

Trace run_forward(const NetworkModel& model, const Image& image) {
  const NetworkSpec& spec = model.spec();
  if (image.height() != spec.height || image.width() != spec.width) {
    throw ConfigError("image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                      ", network expects " + std::to_string(spec.width) + "x" + std::to_string(spec.height));
  }
  const auto geoms = conv_geometry(spec);
  const auto params = model.params();
  const auto& layout = model.layout();

  Trace t;
  t.post.emplace_back(image.pixels().begin(), image.pixels().end());
  for (double& v : t.post[0]) v -= 0.5;
  check_finite(t.post[0], "input");

  for (std::size_t i = 0; i < geoms.size(); ++i) {
    const auto& g = geoms[i];
    const std::size_t plane = g.out.h * g.out.w;
    std::vector<double> cols(col_rows(g) * plane);
    im2col(g, t.post[i].data(), cols.data());
    std::vector<double> pre(g.out.size());
    MatMap out(pre.data(), static_cast<long>(g.out.c), static_cast<long>(plane));
    const ConstMatMap w(params.data() + layout[2 * i].offset, static_cast<long>(g.out.c), static_cast<long>(col_rows(g)));
    const ConstMatMap x(cols.data(), static_cast<long>(col_rows(g)), static_cast<long>(plane));
    out.noalias() = w * x;
    const double* bias = params.data() + layout[2 * i + 1].offset;
    for (std::size_t c = 0; c < g.out.c; ++c) out.row(static_cast<long>(c)).array() += bias[c];
    std::vector<double> post(pre.size());
    for (std::size_t j = 0; j < pre.size(); ++j) post[j] = pre[j] > 0.0 ? pre[j] : g.slope * pre[j];
    check_finite(post, "conv" + std::to_string(i));
    t.cols.push_back(std::move(cols));
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
  }

  const auto& last = t.post.back();
  if (spec.pooling == Pooling::Flatten) {
    t.features = last;
  } else {
    const Shape s = geoms.back().out;
    const std::size_t plane = s.h * s.w;
    t.features.assign(s.c, 0.0);
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (std::size_t j = 0; j < plane; ++j) sum += last[c * plane + j];
      t.features[c] = sum / static_cast<double>(plane);
    }
  }

  const ParamBlock& wb = layout[layout.size() - 2];
  const ParamBlock& bb = layout.back();
  const auto f = static_cast<long>(t.features.size());
  const auto n_out = static_cast<long>(bb.size);
  t.logits.resize(bb.size);
  Eigen::Map<Eigen::VectorXd> logits(t.logits.data(), n_out);
  const ConstMatMap w(params.data() + wb.offset, n_out, f);
  logits.noalias() = w * Eigen::Map<const Eigen::VectorXd>(t.features.data(), f);
  logits += Eigen::Map<const Eigen::VectorXd>(params.data() + bb.offset, n_out);
  check_finite(t.logits, "head");
  return t;
}

struct SampleGrad {
  double loss = 0.0;
  std::vector<double> d_logits;
  std::vector<double> features;
};

// Accumulates the conv-layer part of d loss / d params into grad. The head
// gradient is an outer product, left to the caller to batch.
SampleGrad sample_backward(const NetworkModel& model, const Example& ex, const LossConfig& loss, double* grad) {
  const NetworkSpec& spec = model.spec();
  const auto& layout = model.layout();
  const auto params = model.params();
  Trace t = run_forward(model, *ex.image);

  const std::size_t k = spec.bins;
  const std::span<const double> logits(t.logits);
  const LossGrad la = loss_and_grad(spec.head, logits.first(k), *ex.alpha_target, loss.kind, loss.hinge);
  const LossGrad lr = loss_and_grad(spec.head, logits.subspan(k, k), *ex.rho_target, loss.kind, loss.hinge);
  SampleGrad out{la.loss + lr.loss, la.grad, std::move(t.features)};
  out.d_logits.insert(out.d_logits.end(), lr.grad.begin(), lr.grad.end());
  if (spec.conv.empty()) return out;

  const ParamBlock& wb = layout[layout.size() - 2];
  const auto f = static_cast<long>(out.features.size());
  const auto n_out = static_cast<long>(out.d_logits.size());
  std::vector<double> d_features(out.features.size());
  Eigen::Map<Eigen::VectorXd>(d_features.data(), f).noalias() =
      ConstMatMap(params.data() + wb.offset, n_out, f).transpose() *
      Eigen::Map<const Eigen::VectorXd>(out.d_logits.data(), n_out);

  const auto geoms = conv_geometry(spec);
  std::vector<double> d_post(t.post.back().size());
  if (spec.pooling == Pooling::Flatten) {
    d_post = std::move(d_features);
  } else {
    const Shape s = geoms.back().out;
    const std::size_t plane = s.h * s.w;
    for (std::size_t c = 0; c < s.c; ++c) {
      std::fill_n(d_post.begin() + static_cast<long>(c * plane), plane, d_features[c] / static_cast<double>(plane));
    }
  }

  for (std::size_t i = geoms.size(); i-- > 0;) {
    const auto& g = geoms[i];
    const auto& pre = t.pre[i];
    for (std::size_t j = 0; j < pre.size(); ++j) {
      if (!(pre[j] > 0.0)) d_post[j] *= g.slope;
    }
    const auto plane = static_cast<long>(g.out.h * g.out.w);
    const auto rows = static_cast<long>(col_rows(g));
    const auto oc = static_cast<long>(g.out.c);
    const ConstMatMap d_out(d_post.data(), oc, plane);
    const ConstMatMap x(t.cols[i].data(), rows, plane);
    MatMap(grad + layout[2 * i].offset, oc, rows).noalias() += d_out * x.transpose();
    Eigen::Map<Eigen::VectorXd>(grad + layout[2 * i + 1].offset, oc) += d_out.rowwise().sum();
    if (i == 0) break;
    std::vector<double> d_cols(static_cast<std::size_t>(rows * plane));
    MatMap(d_cols.data(), rows, plane).noalias() =
        ConstMatMap(params.data() + layout[2 * i].offset, oc, rows).transpose() * d_out;
    std::vector<double> d_in(g.in.size(), 0.0);
    col2im(g, d_cols.data(), d_in.data());
    d_post = std::move(d_in);
  }
  return out;
}

void check_grad_finite(const NetworkModel& model, std::span<const double> grad) {
  for (const auto& b : model.layout()) {
    for (std::size_t j = 0; j < b.size; ++j) {
      if (!std::isfinite(grad[b.offset + j])) throw NumericError("non-finite gradient in layer " + b.name);
    }
  }
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  const std::size_t w = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void tree_reduce(std::vector<std::vector<double>>& bufs, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  tree_reduce(bufs, lo, mid);
  tree_reduce(bufs, mid, hi);
  auto& dst = bufs[lo];
  const auto& src = bufs[mid];
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
}

double tree_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() == 1) return v[0];
  const std::size_t mid = v.size() / 2;
  return tree_sum(v.first(mid)) + tree_sum(v.subspan(mid));
}

}  // namespace

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::Flatten ? "flatten" : "gap";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "gap") return Pooling::GlobalAverage;
  if (name == "flatten") return Pooling::Flatten;
  throw ConfigError("unknown pooling '" + std::string(name) + "' (expected gap or flatten)");
}

void NetworkSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("network input dimensions must be positive");
  if (bins < 2) throw ConfigError("network needs at least 2 bins per head");
  if (conv.empty() && pooling == Pooling::GlobalAverage) throw ConfigError("global average pooling needs a conv block");
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const auto& b = conv[i];
    const std::string name = "conv" + std::to_string(i);
    if (b.channels == 0) throw ConfigError(name + ": channels must be positive");
    if (b.kernel == 0 || b.kernel % 2 == 0) throw ConfigError(name + ": kernel must be odd");
    if (b.stride == 0) throw ConfigError(name + ": stride must be positive");
    if (!(b.leaky_slope >= 0.0 && b.leaky_slope < 1.0)) throw ConfigError(name + ": leaky slope must be in [0, 1)");
    const std::size_t pad = b.kernel / 2;
    if (h + 2 * pad < b.kernel || w + 2 * pad < b.kernel) throw ConfigError(name + ": input smaller than kernel");
    h = (h + 2 * pad - b.kernel) / b.stride + 1;
    w = (w + 2 * pad - b.kernel) / b.stride + 1;
  }
}

std::pair<std::size_t, std::size_t> NetworkSpec::output_dims(std::size_t i) const {
  const auto geoms = conv_geometry(*this);
  return {geoms.at(i).out.h, geoms.at(i).out.w};
}

std::size_t NetworkSpec::feature_width() const {
  if (conv.empty()) return height * width;
  const auto geoms = conv_geometry(*this);
  return pooling == Pooling::Flatten ? geoms.back().out.size() : geoms.back().out.c;
}

std::size_t NetworkSpec::param_count() const {
  const auto layout = param_layout(*this);
  return layout.back().offset + layout.back().size;
}

std::vector<ParamBlock> param_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<ParamBlock> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t size) {
    layout.push_back({std::move(name), offset, size});
    offset += size;
  };
  std::size_t in_c = 1;
  for (std::size_t i = 0; i < spec.conv.size(); ++i) {
    const auto& b = spec.conv[i];
    add("conv" + std::to_string(i) + ".weight", b.channels * in_c * b.kernel * b.kernel);
    add("conv" + std::to_string(i) + ".bias", b.channels);
    in_c = b.channels;
  }
  add("head.weight", spec.logit_count() * spec.feature_width());
  add("head.bias", spec.logit_count());
  return layout;
}

NetworkModel::NetworkModel(NetworkSpec spec, GridPtr alpha_grid, GridPtr rho_grid)
    : spec_(std::move(spec)), alpha_grid_(std::move(alpha_grid)), rho_grid_(std::move(rho_grid)) {
  layout_ = param_layout(spec_);
  if (!alpha_grid_ || !rho_grid_) throw ConfigError("network needs both an alpha and a rho grid");
  if (alpha_grid_->size() != spec_.bins || rho_grid_->size() != spec_.bins) {
    throw ConfigError("grid bin counts do not match the network's " + std::to_string(spec_.bins) + " bins");
  }
  params_.assign(layout_.back().offset + layout_.back().size, 0.0);
}

void NetworkModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::size_t fan_in = 1;
  for (std::size_t i = 0; i < spec_.conv.size(); ++i) {
    const auto& b = spec_.conv[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in * b.kernel * b.kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : params("conv" + std::to_string(i) + ".weight")) w = dist(rng);
    for (double& v : params("conv" + std::to_string(i) + ".bias")) v = 0.0;
    fan_in = b.channels;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.feature_width()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : params("head.weight")) w = dist(rng);
  for (double& v : params("head.bias")) v = 0.0;
}

const ParamBlock& NetworkModel::block(std::string_view name) const {
  for (const auto& b : layout_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + std::string(name));
}

std::span<double> NetworkModel::params(std::string_view block_name) {
  const ParamBlock& b = block(block_name);
  return std::span<double>(params_).subspan(b.offset, b.size);
}

std::vector<double> forward_logits(const NetworkModel& model, const Image& image) {
  return run_forward(model, image).logits;
}

Prediction forward(const NetworkModel& model, const Image& image) {
  const auto logits = forward_logits(model, image);
  const std::size_t k = model.spec().bins;
  const std::span<const double> all(logits);
  auto head = [&](const GridPtr& grid, std::span<const double> z) {
    return model.spec().head == HeadKind::Softmax ? softmax_head(grid, z) : softplus_head(grid, z);
  };
  return {head(model.alpha_grid(), all.first(k)), head(model.rho_grid(), all.subspan(k, k))};
}

std::vector<Prediction> predict_batch(const NetworkModel& model, std::span<const Image* const> images,
                                      std::size_t workers) {
  std::vector<std::optional<Prediction>> slots(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) { slots[i] = forward(model, *images[i]); });
  std::vector<Prediction> out;
  out.reserve(images.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<Prediction> predict_batch(const NetworkModel& model, std::span<const Image> images, std::size_t workers) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  return predict_batch(model, std::span<const Image* const>(ptrs), workers);
}

BackwardResult backward(const NetworkModel& model, std::span<const Example> batch, const LossConfig& loss,
                        std::size_t workers) {
  if (batch.empty()) throw ConfigError("backward needs a non-empty batch");
  const auto& layout = model.layout();
  const ParamBlock& wb = layout[layout.size() - 2];
  const ParamBlock& bb = layout.back();
  const std::size_t n_conv = wb.offset;  // conv parameters precede the head

  std::vector<std::vector<double>> conv_grads(batch.size());
  std::vector<SampleGrad> samples(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    conv_grads[i].assign(n_conv, 0.0);
    samples[i] = sample_backward(model, batch[i], loss, conv_grads[i].data());
  });

  const std::size_t n = batch.size();
  const double scale = 1.0 / static_cast<double>(n);
  std::vector<double> losses(n);
  for (std::size_t i = 0; i < n; ++i) losses[i] = samples[i].loss;
  BackwardResult result{tree_sum(losses) * scale, std::vector<double>(model.params().size(), 0.0)};
  if (!std::isfinite(result.loss)) throw NumericError("non-finite loss");

  tree_reduce(conv_grads, 0, n);
  std::copy(conv_grads[0].begin(), conv_grads[0].end(), result.grad.begin());

  // Head: sum_i d_logits_i features_i^T as one product over the batch.
  const auto n_out = static_cast<long>(bb.size);
  const auto f = static_cast<long>(samples[0].features.size());
  RowMatrix d_logits(static_cast<long>(n), n_out);
  RowMatrix features(static_cast<long>(n), f);
  for (std::size_t i = 0; i < n; ++i) {
    d_logits.row(static_cast<long>(i)) = Eigen::Map<const Eigen::RowVectorXd>(samples[i].d_logits.data(), n_out);
    features.row(static_cast<long>(i)) = Eigen::Map<const Eigen::RowVectorXd>(samples[i].features.data(), f);
  }
  MatMap(result.grad.data() + wb.offset, n_out, f).noalias() = d_logits.transpose() * features;
  std::vector<double> column(n);
  for (long o = 0; o < n_out; ++o) {
    for (std::size_t i = 0; i < n; ++i) column[i] = d_logits(static_cast<long>(i), o);
    result.grad[bb.offset + static_cast<std::size_t>(o)] = tree_sum(column);
  }

  for (double& g : result.grad) g *= scale;
  check_grad_finite(model, result.grad);
  return result;
}

}  // namespace rbc
