#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace qlink {

// Shortest decimal form that round-trips the double exactly; keeps result
// files deterministic without %.17g digit noise.
inline std::string format_double(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace qlink
