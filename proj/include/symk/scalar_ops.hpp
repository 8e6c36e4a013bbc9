#pragma once

#include <cmath>
#include <limits>

#include "symk/expr.hpp"

namespace symk {

// Shared scalar primitives used by both the tree interpreter and the
// instruction programs, so the two evaluation paths agree bitwise.
namespace scalar_ops {

inline double sign_value(double x) {
  if (std::isnan(x)) return x;
  if (x > 0.0) return 1.0;
  if (x < 0.0) return -1.0;
  return 0.0;  // covers both signed zeros
}

inline double eval_pow(double base, double exp) {
  const double r = std::rint(exp);
  if (r == exp && std::fabs(r) <= 512.0) {
    long long n = static_cast<long long>(r);
    const bool invert = n < 0;
    if (invert) n = -n;
    double acc = 1.0, b = base;
    while (n > 0) {
      if (n & 1) acc *= b;
      b *= b;
      n >>= 1;
    }
    return invert ? 1.0 / acc : acc;
  }
  return std::pow(base, exp);
}

inline double eval_unary(FnKind fn, double x) {
  switch (fn) {
    case FnKind::Sin: return std::sin(x);
    case FnKind::Cos: return std::cos(x);
    case FnKind::Tan: return std::tan(x);
    case FnKind::Sqrt: return x < 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(x);
    case FnKind::Abs: return std::fabs(x);
    case FnKind::Sign: return sign_value(x);
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

inline double eval_binary(FnKind fn, double a, double b) {
  switch (fn) {
    case FnKind::Min: return std::fmin(a, b);
    case FnKind::Max: return std::fmax(a, b);
    case FnKind::Atan2: return std::atan2(a, b);
    default: return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace scalar_ops
}  // namespace symk
