#pragma once

#include <string>

#include "symk/expr.hpp"

namespace symk {

// Default epsilon per precision, 10x the machine epsilon.
inline constexpr double kDefaultEpsilon = 2.2e-15;        // double precision
inline constexpr double kDefaultEpsilonSingle = 1.2e-6;   // single precision

struct EpsilonPolicy {
  double value = kDefaultEpsilon;
};

// Branchless sign that maps 0 (and -0.0) to +1: 2*min(0, sign(x)) + 1.
Expr sign_no_zero(const Expr& x);

// Shifts the input of f away from a singularity at x0:
// x -> (x - x0) + snz(x - x0)*eps + x0.
Expr epsilonize(const Expr& f, const Expr& x, const Expr& eps, double x0 = 0.0);

// a + max(sign(cond), 0)*(b - a): a when cond <= 0, b otherwise. cond encodes
// lhs - rhs for the comparison lhs <= rhs.
Expr branchless_select(const Expr& cond, const Expr& a, const Expr& b);

enum class SingularityVerdict { RemovableAndHandled, NonRemovable, Mismatch };

std::string_view to_string(SingularityVerdict v);

struct SingularityReport {
  double raw_value_at_x0 = 0.0;  // NaN, +-Inf, or finite
  double true_limit = 0.0;       // lim_{x->x0} f(x, 0); NaN when it does not exist
  double eps_limit = 0.0;        // lim_{eps->0+} f(x0, eps); NaN when it does not exist
  double derivative_true_limit = 0.0;
  double derivative_eps_limit = 0.0;
  SingularityVerdict verdict = SingularityVerdict::Mismatch;
};

// Checks that f_safe(x, eps) handles a removable singularity at x = x0:
// (1) f_safe(x0, 0) should be indeterminate (NaN); +-Inf means the
//     singularity is not removable and the check stops there.
// (2) lim_{x->x0} f_safe(x, 0) is estimated by Richardson extrapolation over
//     x0 +- 2^-k, k = 10..40.
// (3) lim_{eps->0+} f_safe(x0, eps) over eps = 2^-k.
// (4) Handled iff both limits are finite and agree within 1e-6; then the
//     same steps run on d f_safe/dx.
SingularityReport verify_singularity_handling(const Expr& f_safe, const Expr& x, const Expr& eps,
                                              double x0);

// Text table for one report, used by the CLI.
std::string render_report(const std::string& name, double x0, const SingularityReport& report);

}  // namespace symk
