#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "rbc/bins.hpp"
#include "rbc/line.hpp"

namespace rbc {

// Scalar uncertainty measures of a predicted histogram.

/// Shannon entropy in nats, 0 ln 0 = 0.
double entropy(std::span<const double> probs);
double entropy(const Histogram& h);

/// Variance of the bin index, in squared bin units.
double variance(std::span<const double> probs);
double variance(const Histogram& h);

/// 1 / max_k p[k].
double inv_max(std::span<const double> probs);
double inv_max(const Histogram& h);

enum class UncertaintyMeasure { Entropy, Variance, InvMax };

std::string_view to_string(UncertaintyMeasure m);
UncertaintyMeasure parse_uncertainty_measure(std::string_view name);
double uncertainty(UncertaintyMeasure m, std::span<const double> probs);

/// Per-sample absolute error paired with a predicted uncertainty.
struct EvalRecord {
  double error;
  double uncertainty;
};

struct SparsificationResult {
  std::vector<double> fractions;
  std::vector<double> sparsification;
  std::vector<double> oracle;
  std::vector<double> error;  // sparsification - oracle
  double ause = 0.0;
};

/// Sparsification and oracle curves at fractions 0, 1/steps, ...,
/// (steps-1)/steps, both normalized by the full-set MAE, and the trapezoidal
/// area between them.
///
/// At fraction i/steps the ceil(i n / steps) samples with the highest
/// uncertainty (resp. error) are removed, capped so at least one sample
/// remains. Ties are removed in ascending index order. `workers` only
/// changes how fractions are scheduled, never the result.
SparsificationResult sparsification(std::span<const EvalRecord> records, std::size_t steps = 100,
                                    std::size_t workers = 1);

/// Squared CDF distance between p and the binned mixture, bin-index units.
double crps_mixture(const Histogram& p, const DiracMixture& mix);

/// Largest vertical distance between the two lines over x in [0, width],
/// divided by the image height.
double horizon_error(const LineParams& pred, const LineParams& gt, double width, double height);

/// Normalized area under the cumulative error histogram on [0, cutoff].
/// A detector with all errors zero scores 1.
double auc_cumulative_error(std::span<const double> errors, double cutoff = 0.25);

/// Gaussian kernel density estimate evaluated at eval_points.
std::vector<double> kde(std::span<const double> values, double bandwidth,
                        std::span<const double> eval_points);

/// Silverman's rule-of-thumb bandwidth, floored at `min_bandwidth`.
double silverman_bandwidth(std::span<const double> values, double min_bandwidth = 1e-3);

/// Count of strict local maxima above `threshold` (a plateau counts once).
std::size_t count_modes(std::span<const double> probs, double threshold);

/// CSV with header `fraction,sparsification,oracle,sparsification_error`.
void write_sparsification_csv(std::ostream& out, const SparsificationResult& result);

}  // namespace rbc
