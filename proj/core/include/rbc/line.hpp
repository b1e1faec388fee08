#pragma once

#include <cmath>
#include <numbers>

namespace rbc {

/// Line {(x, y) : -x sin(alpha) + y cos(alpha) = rho} in pixel coordinates,
/// with the origin at the top-left pixel center and y pointing down.
struct LineParams {
  double alpha = 0.0;  // radians, [-pi/2, pi/2]
  double rho = 0.0;    // pixels, >= 0

  bool valid() const noexcept {
    return std::abs(alpha) <= std::numbers::pi / 2 && rho >= 0.0 && std::isfinite(rho);
  }

  /// Row of the line at column x. Undefined for vertical lines.
  double y_at(double x) const { return std::tan(alpha) * x + rho / std::cos(alpha); }

  /// Unsigned distance from a point to the line.
  double distance(double x, double y) const {
    return std::abs(-x * std::sin(alpha) + y * std::cos(alpha) - rho);
  }

  friend bool operator==(const LineParams&, const LineParams&) = default;
};

}  // namespace rbc
