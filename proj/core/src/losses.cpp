#include "rbc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "head_math.hpp"
#include "rbc/error.hpp"

namespace rbc {

namespace {

constexpr double kNllFloor = 1e-12;

void require_same_grid(const Histogram& p, const Histogram& q) {
  if (!p.same_grid(q)) throw std::invalid_argument("histograms live on different grids");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// The K-th CDF term is |1 - 1| for normalized inputs, so only the first K-1
// terms are summed.
double w1_value(std::span<const double> p, std::span<const double> q) {
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    total += std::abs(cp - cq);
  }
  return total;
}

// d/dp[j] sum_k |P[k] - Q[k]| = sum_{k >= j} sign(P[k] - Q[k]).
std::vector<double> w1_grad(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = p.size();
  std::vector<double> signs(n, 0.0);
  double cp = 0.0, cq = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    cp += p[k];
    cq += q[k];
    signs[k] = sign(cp - cq);
  }
  std::vector<double> grad(n, 0.0);
  double acc = 0.0;
  for (std::size_t j = n; j-- > 0;) {
    acc += signs[j];
    grad[j] = acc;
  }
  return grad;
}

double nll_value(std::span<const double> p, std::span<const double> q) {
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (q[k] != 0.0) total -= q[k] * std::log(p[k] + kNllFloor);
  }
  return std::max(total, 0.0);
}

struct Hinged {
  std::vector<double> probs;
  double mass;     // sum of clamped entries before renormalization
  bool fallback;   // every entry fell below the hinge
};

Hinged apply_hinge(std::span<const double> p, const HingeConfig& cfg) {
  cfg.validate();
  if (cfg.gamma == 0.0) return {{p.begin(), p.end()}, 1.0, false};
  Hinged out{std::vector<double>(p.size()), 0.0, false};
  for (std::size_t k = 0; k < p.size(); ++k) {
    out.probs[k] = std::max(p[k] - cfg.gamma, 0.0);
    out.mass += out.probs[k];
  }
  if (out.mass > 0.0) {
    for (double& v : out.probs) v /= out.mass;
    return out;
  }
  if (cfg.fallback == HingeFallback::Error) {
    throw NumericError("hinge removed every bin (gamma = " + std::to_string(cfg.gamma) + ")");
  }
  std::fill(out.probs.begin(), out.probs.end(), 1.0 / static_cast<double>(p.size()));
  out.fallback = true;
  return out;
}

void require_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("logits must be finite");
  }
}

}  // namespace

LossValue::LossValue(double value) : value_(value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw NumericError("loss value must be finite and >= 0, got " + std::to_string(value));
  }
}

void HingeConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("hinge gamma must lie in [0, 1)");
}

std::string_view to_string(HeadKind head) {
  switch (head) {
    case HeadKind::Softmax: return "softmax";
    case HeadKind::Softplus: return "softplus";
  }
  return "?";
}

std::string_view to_string(LossKind loss) {
  switch (loss) {
    case LossKind::Nll: return "nll";
    case LossKind::W1: return "w1";
    case LossKind::HingeW1: return "hinge_w1";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view name) {
  if (name == "softmax") return HeadKind::Softmax;
  if (name == "softplus") return HeadKind::Softplus;
  throw std::invalid_argument("unknown head '" + std::string(name) + "'");
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "nll") return LossKind::Nll;
  if (name == "w1") return LossKind::W1;
  if (name == "hinge_w1") return LossKind::HingeW1;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

LossValue w1_cdf(const Histogram& p, const Histogram& q) {
  require_same_grid(p, q);
  return LossValue(w1_value(p.probs(), q.probs()));
}

LossValue w1_dirac(const Histogram& p, std::size_t target_bin, unsigned order) {
  if (target_bin >= p.size()) throw std::out_of_range("target bin out of range");
  if (order < 1) throw std::invalid_argument("Wasserstein order must be >= 1");
  const auto m = static_cast<double>(order);
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double dist = std::abs(static_cast<double>(k) - static_cast<double>(target_bin));
    total += p[k] * (order == 1 ? dist : std::pow(dist, m));
  }
  return LossValue(order == 1 ? total : std::pow(total, 1.0 / m));
}

Histogram hinge_renormalize(const Histogram& p, const HingeConfig& cfg) {
  if (cfg.gamma == 0.0) {
    cfg.validate();
    return p;
  }
  return Histogram(p.grid_ptr(), apply_hinge(p.probs(), cfg).probs);
}

LossValue hinge_w1(const Histogram& p, const Histogram& q, const HingeConfig& cfg) {
  require_same_grid(p, q);
  return w1_cdf(hinge_renormalize(p, cfg), q);
}

LossValue nll(const Histogram& p, const Histogram& q) {
  require_same_grid(p, q);
  return LossValue(nll_value(p.probs(), q.probs()));
}

std::vector<double> head_probs(HeadKind head, std::span<const double> logits) {
  require_finite(logits);
  std::vector<double> probs(logits.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = head == HeadKind::Softmax ? logits[i] : detail::log_softplus(logits[i]);
    top = std::max(top, probs[i]);
  }
  double sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - top);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return probs;
}

LossGrad loss_and_grad(HeadKind head, std::span<const double> logits, const Histogram& target,
                       LossKind loss, const HingeConfig& cfg) {
  if (logits.size() != target.size()) throw std::invalid_argument("logit count does not match the target");
  const std::vector<double> p = head_probs(head, logits);
  const auto q = target.probs();
  const std::size_t n = p.size();

  LossGrad out{0.0, std::vector<double>(n, 0.0)};
  std::vector<double> dp(n, 0.0);

  switch (loss) {
    case LossKind::Nll:
      out.loss = nll_value(p, q);
      for (std::size_t k = 0; k < n; ++k) dp[k] = -q[k] / (p[k] + kNllFloor);
      break;
    case LossKind::W1:
      out.loss = w1_value(p, q);
      dp = w1_grad(p, q);
      break;
    case LossKind::HingeW1: {
      const Hinged h = apply_hinge(p, cfg);
      out.loss = w1_value(h.probs, q);
      if (h.fallback) return out;
      const std::vector<double> dbar = w1_grad(h.probs, q);
      if (cfg.gamma == 0.0) {
        dp = dbar;
        break;
      }
      // Renormalization Jacobian, then the ReLU mask.
      double inner = 0.0;
      for (std::size_t k = 0; k < n; ++k) inner += dbar[k] * h.probs[k];
      for (std::size_t k = 0; k < n; ++k) {
        dp[k] = p[k] > cfg.gamma ? (dbar[k] - inner) / h.mass : 0.0;
      }
      break;
    }
  }

  // Both heads share dL/dz_j = p_j r_j (dp_j - <dp, p>) with r = 1 for
  // softmax and r = sigmoid(z)/softplus(z) for softplus + l1.
  double inner = 0.0;
  for (std::size_t k = 0; k < n; ++k) inner += dp[k] * p[k];
  for (std::size_t k = 0; k < n; ++k) {
    const double r = head == HeadKind::Softmax ? 1.0 : detail::sigmoid_over_softplus(logits[k]);
    out.grad[k] = p[k] * r * (dp[k] - inner);
    if (!std::isfinite(out.grad[k])) throw NumericError("non-finite loss gradient");
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss value");
  return out;
}

std::vector<double> loss_grad(HeadKind head, std::span<const double> logits, const Histogram& target,
                              LossKind loss, const HingeConfig& cfg) {
  return loss_and_grad(head, logits, target, loss, cfg).grad;
}

namespace {

GradAnalysis summarize(std::vector<double> grad, std::size_t target_bin) {
  GradAnalysis out{std::move(grad), 0.0, 0.0, 0.0};
  out.case1_score = std::abs(out.grad[target_bin]);
  for (double g : out.grad) {
    out.case2_score = std::max(out.case2_score, std::abs(g));
    out.grad_norm += g * g;
  }
  out.grad_norm = std::sqrt(out.grad_norm);
  return out;
}

}  // namespace

GradAnalysis softmax_w1_grad_analysis(std::span<const double> logits, std::size_t target_bin) {
  if (target_bin >= logits.size()) throw std::out_of_range("target bin out of range");
  const std::vector<double> g = head_probs(HeadKind::Softmax, logits);
  const auto dist = [&](std::size_t i) {
    return std::abs(static_cast<double>(i) - static_cast<double>(target_bin));
  };
  double expected = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) expected += dist(i) * g[i];
  std::vector<double> grad(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) grad[k] = g[k] * (dist(k) - expected);
  return summarize(std::move(grad), target_bin);
}

GradAnalysis w1_grad_analysis(HeadKind head, std::span<const double> logits, std::size_t target_bin) {
  if (target_bin >= logits.size()) throw std::out_of_range("target bin out of range");
  std::vector<double> edges(logits.size() + 1);
  std::iota(edges.begin(), edges.end(), 0.0);
  const auto grid = share(BinGrid(std::move(edges)));
  return summarize(loss_grad(head, logits, Histogram::one_hot(grid, target_bin), LossKind::W1), target_bin);
}

}  // namespace rbc
