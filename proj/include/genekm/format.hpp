#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace genekm {

// P-values in scientific notation with 4 significant digits; NaN as "NA".
inline std::string format_p_value(double p) {
  if (std::isnan(p)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", p);
  return buf;
}

inline std::string format_number(double x, int digits = 6) {
  if (std::isnan(x)) return "NA";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

}  // namespace genekm
