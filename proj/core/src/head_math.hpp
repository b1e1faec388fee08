#pragma once

#include <cmath>

namespace rbc::detail {

// ln(softplus(z)) without underflow for very negative z.
inline double log_softplus(double z) {
  if (z > 30.0) return std::log(z + std::log1p(std::exp(-z)));
  if (z < -30.0) return z - 0.5 * std::exp(z);
  return std::log(std::log1p(std::exp(z)));
}

// sigmoid(z) / softplus(z); tends to 1 as z -> -inf.
inline double sigmoid_over_softplus(double z) {
  if (z < -30.0) return 1.0 + 0.5 * std::exp(z);
  const double sig = 1.0 / (1.0 + std::exp(-z));
  const double sp = z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return sig / sp;
}

}  // namespace rbc::detail
