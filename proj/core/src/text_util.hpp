#pragma once

// Internal text helpers shared by the serialization paths. All floating-point
// values are written with %.17g, which round-trips IEEE doubles exactly.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "deepstorm/errors.hpp"

namespace deepstorm::detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || (end && *end != '\0')) {
    throw IoError("malformed number: '" + s + "'");
  }
  return v;
}

inline long long parse_ll(const std::string& s) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || (end && *end != '\0')) {
    throw IoError("malformed integer: '" + s + "'");
  }
  return v;
}

}  // namespace deepstorm::detail
