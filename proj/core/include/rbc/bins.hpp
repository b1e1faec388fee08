#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace rbc {

/// Discretization of a scalar regression range into K bins.
///
/// Bin k covers [edges[k], edges[k+1]). The final edge may be +infinity, in
/// which case the last bin is open-ended.
class BinGrid {
 public:
  explicit BinGrid(std::vector<double> edges);

  std::size_t size() const noexcept { return edges_.size() - 1; }
  std::span<const double> edges() const noexcept { return edges_; }
  double lower(std::size_t k) const { return edges_.at(k); }
  double upper(std::size_t k) const { return edges_.at(k + 1); }
  bool open_ended() const noexcept;

  /// Representative value of bin k: the midpoint, or the left edge for an
  /// infinite last bin.
  double center(std::size_t k) const;

  /// Index of the bin containing v. Values on an interior edge belong to the
  /// right-hand bin; values below the grid clamp to bin 0 and values at or
  /// above a finite last edge clamp to bin K-1.
  std::size_t bin_of(double v) const;

  friend bool operator==(const BinGrid&, const BinGrid&) = default;

 private:
  std::vector<double> edges_;
};

using GridPtr = std::shared_ptr<const BinGrid>;

inline GridPtr share(BinGrid grid) {
  return std::make_shared<const BinGrid>(std::move(grid));
}

/// A probability vector over the bins of a grid.
class Histogram {
 public:
  /// Throws std::invalid_argument unless probs is non-negative, sums to
  /// 1 within 1e-9 and has one entry per bin.
  Histogram(GridPtr grid, std::vector<double> probs);

  static Histogram uniform(GridPtr grid);
  static Histogram one_hot(GridPtr grid, std::size_t k);

  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t k) const { return probs_[k]; }
  const BinGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  /// Running sums P[k] = p[0] + ... + p[k].
  std::vector<double> cdf() const;

  bool same_grid(const Histogram& other) const noexcept;

 private:
  GridPtr grid_;
  std::vector<double> probs_;
};

struct DiracComponent {
  double value;
  double weight;
};

/// Weighted point masses; weights are non-negative and sum to one.
class DiracMixture {
 public:
  explicit DiracMixture(std::vector<DiracComponent> components);

  static DiracMixture dirac(double value) { return DiracMixture({{value, 1.0}}); }
  /// Equal weights over the given values.
  static DiracMixture equal(std::span<const double> values);

  std::span<const DiracComponent> components() const noexcept { return components_; }

 private:
  std::vector<DiracComponent> components_;
};

/// K-1 equal-width bins over [lo, hi] followed by [hi, +inf).
BinGrid make_linear_grid(double lo, double hi, std::size_t bins);

/// Edges at the linearly interpolated empirical quantiles i/K of the samples.
BinGrid make_quantile_grid(std::span<const double> samples, std::size_t bins);

/// Assigns each component's weight to its containing bin.
Histogram encode_mixture(const GridPtr& grid, const DiracMixture& mix);

/// Center value carries center_weight; the rest is split equally over the
/// neighbors. An empty neighbor list gives a pure Dirac at the center.
DiracMixture build_neighborhood_mixture(double center, std::span<const double> neighbors,
                                        double center_weight);

/// Convolution with a Gaussian in bin-index space, truncated at +-4 sigma and
/// renormalized. sigma_bins == 0 is the identity.
Histogram gaussian_smooth(const Histogram& h, double sigma_bins);

Histogram softmax_head(const GridPtr& grid, std::span<const double> logits);

/// Elementwise softplus followed by l1 normalization.
Histogram softplus_head(const GridPtr& grid, std::span<const double> logits);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax_bin(std::span<const double> probs);

/// Center of the most probable bin.
double decode_argmax(const Histogram& h);

// Plain-text grid format: one `edge <float>` line per edge, `inf` for an
// infinite final edge.
void write_grid(std::ostream& out, const BinGrid& grid);
BinGrid read_grid(std::istream& in);

// One CSV row of K probabilities per histogram.
void write_histogram_csv(std::ostream& out, const Histogram& h);
Histogram read_histogram_csv(std::istream& in, const GridPtr& grid);

}  // namespace rbc
