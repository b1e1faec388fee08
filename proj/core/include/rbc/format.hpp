#pragma once

#include <cstdio>
#include <string>

namespace rbc {

/// Six significant digits, the precision of every CSV report.
inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace rbc
