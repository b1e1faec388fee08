#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "rbc/bins.hpp"

namespace rbc {

/// A finite, non-negative loss. Wasserstein losses are in bin-index units,
/// NLL in nats.
class LossValue {
 public:
  explicit LossValue(double value);
  double value() const noexcept { return value_; }
  friend auto operator<=>(const LossValue&, const LossValue&) = default;

 private:
  double value_;
};

enum class HingeFallback {
  Uniform,  // all bins below the hinge: treat the prediction as uniform
  Error,    // throw NumericError instead
};

struct HingeConfig {
  double gamma = 0.0;
  HingeFallback fallback = HingeFallback::Uniform;

  /// gamma = 1/K, the level of a uniform random guess.
  static HingeConfig random_guess(std::size_t bins) { return {1.0 / static_cast<double>(bins)}; }
  void validate() const;
};

enum class HeadKind { Softmax, Softplus };
enum class LossKind { Nll, W1, HingeW1 };

std::string_view to_string(HeadKind head);
std::string_view to_string(LossKind loss);
HeadKind parse_head_kind(std::string_view name);
LossKind parse_loss_kind(std::string_view name);

/// Sum over bins of |P[k] - Q[k]|, the closed-form 1-D earth mover distance.
LossValue w1_cdf(const Histogram& p, const Histogram& q);

/// (sum_k p[k] |k - target|^order)^(1/order), Wasserstein against a Dirac.
LossValue w1_dirac(const Histogram& p, std::size_t target_bin, unsigned order = 1);

/// Subtracts the hinge, clamps at zero and renormalizes. gamma == 0 returns
/// p unchanged.
Histogram hinge_renormalize(const Histogram& p, const HingeConfig& cfg);

/// w1_cdf(hinge_renormalize(p, cfg), q).
LossValue hinge_w1(const Histogram& p, const Histogram& q, const HingeConfig& cfg);

/// Cross-entropy -sum_k q[k] ln(p[k] + 1e-12).
LossValue nll(const Histogram& p, const Histogram& q);

/// Probabilities produced by a head, without building a Histogram.
std::vector<double> head_probs(HeadKind head, std::span<const double> logits);

struct LossGrad {
  double loss;
  std::vector<double> grad;  // d loss / d logits
};

/// Loss and exact (sub)gradient with respect to the head's logits.
///
/// Subgradient conventions: sign(0) = 0 in the CDF difference, and the hinge
/// passes no gradient at or below the kink. When every bin falls below the
/// hinge the uniform fallback is constant, so the gradient is zero.
LossGrad loss_and_grad(HeadKind head, std::span<const double> logits, const Histogram& target,
                       LossKind loss, const HingeConfig& cfg = {});

std::vector<double> loss_grad(HeadKind head, std::span<const double> logits, const Histogram& target,
                              LossKind loss, const HingeConfig& cfg = {});

struct GradAnalysis {
  std::vector<double> grad;
  double case1_score;  // |d W1 / d z_target|
  double case2_score;  // max_k |d W1 / d z_k|
  double grad_norm;    // l2 norm of grad
};

/// Closed-form gradient of the softmax + W1-to-Dirac loss:
/// dW1/dz_k = g_k (|k - j*| - sum_i |i - j*| g_i).
GradAnalysis softmax_w1_grad_analysis(std::span<const double> logits, std::size_t target_bin);

/// The same report for either head, computed through loss_and_grad.
GradAnalysis w1_grad_analysis(HeadKind head, std::span<const double> logits, std::size_t target_bin);

}  // namespace rbc
