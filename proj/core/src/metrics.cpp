#include "rbc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

#include "rbc/error.hpp"
#include "rbc/format.hpp"

namespace rbc {

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double entropy(const Histogram& h) { return entropy(h.probs()); }

double variance(std::span<const double> probs) {
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const auto x = static_cast<double>(k);
    m1 += x * probs[k];
    m2 += x * x * probs[k];
  }
  return std::max(m2 - m1 * m1, 0.0);
}

double variance(const Histogram& h) { return variance(h.probs()); }

double inv_max(std::span<const double> probs) {
  const double top = probs.empty() ? 0.0 : *std::max_element(probs.begin(), probs.end());
  if (!(top > 0.0)) throw std::invalid_argument("inv_max of an all-zero histogram");
  return 1.0 / top;
}

double inv_max(const Histogram& h) { return inv_max(h.probs()); }

std::string_view to_string(UncertaintyMeasure m) {
  switch (m) {
    case UncertaintyMeasure::Entropy: return "entropy";
    case UncertaintyMeasure::Variance: return "variance";
    case UncertaintyMeasure::InvMax: return "inv_max";
  }
  return "?";
}

UncertaintyMeasure parse_uncertainty_measure(std::string_view name) {
  if (name == "entropy") return UncertaintyMeasure::Entropy;
  if (name == "variance") return UncertaintyMeasure::Variance;
  if (name == "inv_max") return UncertaintyMeasure::InvMax;
  throw std::invalid_argument("unknown uncertainty measure '" + std::string(name) + "'");
}

double uncertainty(UncertaintyMeasure m, std::span<const double> probs) {
  switch (m) {
    case UncertaintyMeasure::Entropy: return entropy(probs);
    case UncertaintyMeasure::Variance: return variance(probs);
    case UncertaintyMeasure::InvMax: return inv_max(probs);
  }
  throw std::invalid_argument("unknown uncertainty measure");
}

namespace {

// Indices sorted by key descending; equal keys keep ascending index order.
std::vector<std::size_t> removal_order(std::span<const EvalRecord> records, bool by_error) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return by_error ? records[a].error > records[b].error : records[a].uncertainty > records[b].uncertainty;
  });
  return order;
}

// Mean error of the samples left after removing order[0..removed). Summed
// in index order so the value depends only on the removed set.
double remaining_mae(std::span<const EvalRecord> records, std::span<const std::size_t> order,
                     std::size_t removed) {
  std::vector<char> gone(records.size(), 0);
  for (std::size_t i = 0; i < removed; ++i) gone[order[i]] = 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!gone[i]) sum += records[i].error;
  }
  return sum / static_cast<double>(records.size() - removed);
}

}  // namespace

SparsificationResult sparsification(std::span<const EvalRecord> records, std::size_t steps,
                                    std::size_t workers) {
  if (records.size() < 2) throw std::invalid_argument("sparsification needs at least 2 records");
  if (steps < 1) throw std::invalid_argument("sparsification needs at least 1 step");
  for (const auto& r : records) {
    if (!std::isfinite(r.error) || r.error < 0.0) throw std::invalid_argument("record errors must be finite and >= 0");
    if (std::isnan(r.uncertainty)) throw std::invalid_argument("record uncertainty is NaN");
  }
  const std::size_t n = records.size();
  const double full = remaining_mae(records, {}, 0);
  if (!(full > 0.0)) throw NumericError("full-set MAE is zero; sparsification is undefined");

  const auto by_unc = removal_order(records, false);
  const auto by_err = removal_order(records, true);

  SparsificationResult out;
  out.fractions.resize(steps);
  out.sparsification.resize(steps);
  out.oracle.resize(steps);
  out.error.resize(steps);

  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t removed = std::min((i * n + steps - 1) / steps, n - 1);
      out.fractions[i] = static_cast<double>(i) / static_cast<double>(steps);
      out.sparsification[i] = remaining_mae(records, by_unc, removed) / full;
      out.oracle[i] = remaining_mae(records, by_err, removed) / full;
      out.error[i] = out.sparsification[i] - out.oracle[i];
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, steps);
  if (workers == 1) {
    fill(0, steps);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (steps + workers - 1) / workers;
    for (std::size_t begin = 0; begin < steps; begin += chunk) {
      pool.emplace_back(fill, begin, std::min(begin + chunk, steps));
    }
  }

  const double dx = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i + 1 < steps; ++i) out.ause += 0.5 * dx * (out.error[i] + out.error[i + 1]);
  return out;
}

double crps_mixture(const Histogram& p, const DiracMixture& mix) {
  const Histogram target = encode_mixture(p.grid_ptr(), mix);
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cp += p[k];
    cq += target[k];
    total += (cp - cq) * (cp - cq);
  }
  return total;
}

double horizon_error(const LineParams& pred, const LineParams& gt, double width, double height) {
  constexpr double kLimit = std::numbers::pi / 2 - 1e-6;
  if (std::abs(pred.alpha) >= kLimit || std::abs(gt.alpha) >= kLimit) {
    throw std::invalid_argument("horizon error is undefined for near-vertical lines");
  }
  if (!(width > 0.0 && height > 0.0)) throw std::invalid_argument("image dimensions must be positive");
  const double left = std::abs(pred.y_at(0.0) - gt.y_at(0.0));
  const double right = std::abs(pred.y_at(width) - gt.y_at(width));
  return std::max(left, right) / height;
}

double auc_cumulative_error(std::span<const double> errors, double cutoff) {
  if (errors.empty()) throw std::invalid_argument("AUC of an empty error list");
  if (!(cutoff > 0.0)) throw std::invalid_argument("AUC cutoff must be positive");
  // The empirical CDF is a step function, so its integral over [0, cutoff]
  // is the mean of (cutoff - e)+.
  double area = 0.0;
  for (double e : errors) {
    if (!(e >= 0.0)) throw std::invalid_argument("errors must be >= 0");
    area += std::max(cutoff - e, 0.0);
  }
  return area / (cutoff * static_cast<double>(errors.size()));
}

std::vector<double> kde(std::span<const double> values, double bandwidth,
                        std::span<const double> eval_points) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("KDE bandwidth must be positive");
  if (values.empty()) throw std::invalid_argument("KDE needs at least one value");
  const double norm = 1.0 / (static_cast<double>(values.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> density(eval_points.size(), 0.0);
  for (std::size_t i = 0; i < eval_points.size(); ++i) {
    double acc = 0.0;
    for (double v : values) {
      const double z = (eval_points[i] - v) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    density[i] = acc * norm;
  }
  return density;
}

double silverman_bandwidth(std::span<const double> values, double min_bandwidth) {
  if (values.size() < 2) return min_bandwidth;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return std::max(1.06 * sd * std::pow(n, -0.2), min_bandwidth);
}

std::size_t count_modes(std::span<const double> probs, double threshold) {
  std::size_t modes = 0;
  std::size_t i = 0;
  while (i < probs.size()) {
    std::size_t j = i;
    while (j + 1 < probs.size() && probs[j + 1] == probs[i]) ++j;
    const bool left = i == 0 || probs[i - 1] < probs[i];
    const bool right = j + 1 == probs.size() || probs[j + 1] < probs[i];
    if (left && right && probs[i] > threshold) ++modes;
    i = j + 1;
  }
  return modes;
}

void write_sparsification_csv(std::ostream& out, const SparsificationResult& result) {
  out << "fraction,sparsification,oracle,sparsification_error\n";
  for (std::size_t i = 0; i < result.fractions.size(); ++i) {
    out << fmt6(result.fractions[i]) << ',' << fmt6(result.sparsification[i]) << ','
        << fmt6(result.oracle[i]) << ',' << fmt6(result.error[i]) << '\n';
  }
}

}  // namespace rbc
