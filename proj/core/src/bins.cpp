#include "rbc/bins.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "head_math.hpp"
#include "rbc/error.hpp"

namespace rbc {

namespace {

constexpr double kSumTolerance = 1e-9;
constexpr double kMinEdgeSpacing = 1e-9;

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

BinGrid::BinGrid(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 3) throw std::invalid_argument("BinGrid needs at least 2 bins");
  for (std::size_t i = 0; i + 1 < edges_.size(); ++i) {
    if (!std::isfinite(edges_[i])) throw std::invalid_argument("only the last edge may be infinite");
    if (!(edges_[i] < edges_[i + 1])) throw std::invalid_argument("edges must be strictly increasing");
  }
  if (std::isnan(edges_.back()) || edges_.back() == -std::numeric_limits<double>::infinity()) {
    throw std::invalid_argument("invalid last edge");
  }
}

bool BinGrid::open_ended() const noexcept { return std::isinf(edges_.back()); }

double BinGrid::center(std::size_t k) const {
  const double lo = lower(k);
  const double hi = upper(k);
  if (std::isinf(hi)) return lo;
  return 0.5 * (lo + hi);
}

std::size_t BinGrid::bin_of(double v) const {
  if (std::isnan(v)) throw std::invalid_argument("cannot bin NaN");
  const auto it = std::upper_bound(edges_.begin(), edges_.end() - 1, v);
  if (it == edges_.begin()) return 0;
  return std::min<std::size_t>(static_cast<std::size_t>(it - edges_.begin()) - 1, size() - 1);
}

Histogram::Histogram(GridPtr grid, std::vector<double> probs)
    : grid_(std::move(grid)), probs_(std::move(probs)) {
  if (!grid_) throw std::invalid_argument("Histogram requires a grid");
  if (probs_.size() != grid_->size()) {
    throw std::invalid_argument("Histogram has " + std::to_string(probs_.size()) +
                                " entries for a grid of " + std::to_string(grid_->size()) + " bins");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("Histogram entries must be finite and >= 0");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw std::invalid_argument("Histogram sums to " + format_double(sum) + ", expected 1");
  }
}

Histogram Histogram::uniform(GridPtr grid) {
  const std::size_t k = grid->size();
  return Histogram(std::move(grid), std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

Histogram Histogram::one_hot(GridPtr grid, std::size_t k) {
  std::vector<double> probs(grid->size(), 0.0);
  probs.at(k) = 1.0;
  return Histogram(std::move(grid), std::move(probs));
}

std::vector<double> Histogram::cdf() const {
  std::vector<double> out(probs_.size());
  std::partial_sum(probs_.begin(), probs_.end(), out.begin());
  return out;
}

bool Histogram::same_grid(const Histogram& other) const noexcept {
  return grid_ == other.grid_ || *grid_ == *other.grid_;
}

DiracMixture::DiracMixture(std::vector<DiracComponent> components) : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("DiracMixture needs at least one component");
  double sum = 0.0;
  for (const auto& c : components_) {
    if (!std::isfinite(c.value)) throw std::invalid_argument("mixture values must be finite");
    if (!(c.weight >= 0.0 && c.weight <= 1.0)) throw std::invalid_argument("mixture weights must lie in [0, 1]");
    sum += c.weight;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) throw std::invalid_argument("mixture weights must sum to 1");
}

DiracMixture DiracMixture::equal(std::span<const double> values) {
  std::vector<DiracComponent> comps;
  comps.reserve(values.size());
  for (double v : values) comps.push_back({v, 1.0 / static_cast<double>(values.size())});
  return DiracMixture(std::move(comps));
}

BinGrid make_linear_grid(double lo, double hi, std::size_t bins) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("grid bounds must be finite");
  if (!(lo < hi)) throw std::invalid_argument("grid needs lo < hi");
  if (bins < 2) throw std::invalid_argument("grid needs at least 2 bins");
  const std::size_t finite_bins = bins - 1;
  const double width = (hi - lo) / static_cast<double>(finite_bins);
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i < finite_bins; ++i) edges[i] = lo + width * static_cast<double>(i);
  edges[finite_bins] = hi;
  edges[bins] = std::numeric_limits<double>::infinity();
  return BinGrid(std::move(edges));
}

BinGrid make_quantile_grid(std::span<const double> samples, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("grid needs at least 2 bins");
  require_finite(samples, "quantile samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t n_distinct = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) n_distinct += sorted[i] != sorted[i - 1];
  if (n_distinct < bins) {
    throw std::invalid_argument("quantile grid needs at least " + std::to_string(bins) +
                                " distinct samples, got " + std::to_string(n_distinct));
  }

  const double last = static_cast<double>(sorted.size() - 1);
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    const double pos = last * static_cast<double>(i) / static_cast<double>(bins);
    const auto below = static_cast<std::size_t>(std::floor(pos));
    const std::size_t above = std::min(below + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(below);
    edges[i] = sorted[below] + frac * (sorted[above] - sorted[below]);
  }
  for (std::size_t i = 1; i <= bins; ++i) {
    if (edges[i] <= edges[i - 1]) {
      edges[i] = std::max(edges[i - 1] + kMinEdgeSpacing,
                          std::nextafter(edges[i - 1], std::numeric_limits<double>::infinity()));
    }
  }
  return BinGrid(std::move(edges));
}

Histogram encode_mixture(const GridPtr& grid, const DiracMixture& mix) {
  std::vector<double> probs(grid->size(), 0.0);
  for (const auto& c : mix.components()) probs[grid->bin_of(c.value)] += c.weight;
  return Histogram(grid, std::move(probs));
}

DiracMixture build_neighborhood_mixture(double center, std::span<const double> neighbors,
                                        double center_weight) {
  if (!(center_weight > 0.0 && center_weight <= 1.0)) {
    throw std::invalid_argument("center_weight must lie in (0, 1]");
  }
  if (neighbors.empty()) return DiracMixture::dirac(center);
  std::vector<DiracComponent> comps;
  comps.reserve(neighbors.size() + 1);
  comps.push_back({center, center_weight});
  const double rest = (1.0 - center_weight) / static_cast<double>(neighbors.size());
  for (double v : neighbors) comps.push_back({v, rest});
  return DiracMixture(std::move(comps));
}

Histogram gaussian_smooth(const Histogram& h, double sigma_bins) {
  if (!(sigma_bins >= 0.0) || !std::isfinite(sigma_bins)) {
    throw std::invalid_argument("sigma_bins must be finite and >= 0");
  }
  if (sigma_bins == 0.0) return h;

  const auto n = static_cast<std::ptrdiff_t>(h.size());
  const auto radius = static_cast<std::ptrdiff_t>(std::floor(4.0 * sigma_bins));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
    const double x = static_cast<double>(d) / sigma_bins;
    kernel[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * x * x);
  }

  std::vector<double> out(h.size(), 0.0);
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const double mass = h[static_cast<std::size_t>(j)];
    if (mass == 0.0) continue;
    for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
      const std::ptrdiff_t k = j + d;
      if (k < 0 || k >= n) continue;
      out[static_cast<std::size_t>(k)] += mass * kernel[static_cast<std::size_t>(d + radius)];
    }
  }
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= total;
  return Histogram(h.grid_ptr(), std::move(out));
}

Histogram softmax_head(const GridPtr& grid, std::span<const double> logits) {
  require_finite(logits, "logits");
  if (logits.size() != grid->size()) throw std::invalid_argument("logit count does not match the grid");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - top);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return Histogram(grid, std::move(probs));
}

Histogram softplus_head(const GridPtr& grid, std::span<const double> logits) {
  require_finite(logits, "logits");
  if (logits.size() != grid->size()) throw std::invalid_argument("logit count does not match the grid");
  // Normalize in the log domain so that very negative logits cannot
  // underflow the whole vector to zero.
  std::vector<double> probs(logits.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = detail::log_softplus(logits[i]);
    top = std::max(top, probs[i]);
  }
  double sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - top);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return Histogram(grid, std::move(probs));
}

std::size_t argmax_bin(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double decode_argmax(const Histogram& h) { return h.grid().center(argmax_bin(h.probs())); }

void write_grid(std::ostream& out, const BinGrid& grid) {
  for (double e : grid.edges()) out << "edge " << format_double(e) << '\n';
}

BinGrid read_grid(std::istream& in) {
  std::vector<double> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key, value, extra;
    if (!(fields >> key >> value) || key != "edge" || (fields >> extra)) {
      throw FormatError("grid line " + std::to_string(lineno) + ": expected 'edge <float>'");
    }
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size()) {
      throw FormatError("grid line " + std::to_string(lineno) + ": bad number '" + value + "'");
    }
    edges.push_back(v);
  }
  try {
    return BinGrid(std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid grid: ") + e.what());
  }
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (k) out << ',';
    out << format_double(h[k]);
  }
  out << '\n';
}

Histogram read_histogram_csv(std::istream& in, const GridPtr& grid) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing histogram row");
  std::vector<double> probs;
  std::istringstream fields(line);
  std::string cell;
  while (std::getline(fields, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size()) throw FormatError("bad histogram cell '" + cell + "'");
    probs.push_back(v);
  }
  try {
    return Histogram(grid, std::move(probs));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid histogram row: ") + e.what());
  }
}

}  // namespace rbc
