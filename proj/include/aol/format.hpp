#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace aol {

/// Nine significant digits, the precision used by every emitted table.
inline std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace aol
