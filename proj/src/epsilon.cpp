#include "symk/epsilon.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <vector>

namespace symk {

Expr sign_no_zero(const Expr& x) { return Expr(2) * min(Expr(0), sign(x)) + Expr(1); }

Expr epsilonize(const Expr& f, const Expr& x, const Expr& eps, double x0) {
  Expr shifted_arg = x;
  if (x0 == 0.0) {
    shifted_arg = x + sign_no_zero(x) * eps;
  } else {
    const Expr centered = x - Expr(x0);
    shifted_arg = centered + sign_no_zero(centered) * eps + Expr(x0);
  }
  return substitute(f, {{x, shifted_arg}});
}

Expr branchless_select(const Expr& cond, const Expr& a, const Expr& b) {
  return a + max(sign(cond), Expr(0)) * (b - a);
}

std::string_view to_string(SingularityVerdict v) {
  switch (v) {
    case SingularityVerdict::RemovableAndHandled: return "removable-and-handled";
    case SingularityVerdict::NonRemovable: return "non-removable";
    case SingularityVerdict::Mismatch: return "mismatch";
  }
  return "?";
}

namespace {

constexpr double kLimitTol = 1e-6;
constexpr int kMinExp = 10;
constexpr int kMaxExp = 40;

bool limits_agree(double a, double b) {
  return std::fabs(a - b) <= kLimitTol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

struct LimitEstimate {
  bool exists = false;
  double value = std::numeric_limits<double>::quiet_NaN();
};

// Richardson extrapolation of g(h) as h -> 0 over h = 2^-k, assuming an
// expansion g(h) = L + c1 h + c2 h^2 + ... . The diagonal of the Neville
// table is scanned for the best-converged entry.
LimitEstimate richardson_limit(const std::vector<double>& samples) {
  LimitEstimate est;
  if (samples.size() < 3) return est;
  std::vector<std::vector<double>> table(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    table[i].resize(i + 1);
    table[i][0] = samples[i];
    for (std::size_t j = 1; j <= i; ++j) {
      const double factor = std::ldexp(1.0, static_cast<int>(j));  // 2^j
      table[i][j] = (factor * table[i][j - 1] - table[i - 1][j - 1]) / (factor - 1.0);
    }
  }
  double best = std::numeric_limits<double>::quiet_NaN();
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double cur = table[i][i];
    const double prev = table[i - 1][i - 1];
    if (!std::isfinite(cur)) continue;
    const double err = std::fabs(cur - prev);
    if (err < best_err) {
      best_err = err;
      best = cur;
    }
  }
  if (!std::isfinite(best)) return est;
  // Also require the raw tail to stabilize; Richardson alone can invent a
  // finite answer from a divergent sequence.
  const double tail = samples.back();
  const double tail2 = samples[samples.size() - 2];
  if (!std::isfinite(tail) || !std::isfinite(tail2)) return est;
  if (std::fabs(tail - best) > 1e-3 * std::max(1.0, std::fabs(best))) return est;
  if (best_err > 1e-4 * std::max(1.0, std::fabs(best))) return est;
  est.exists = true;
  est.value = best;
  return est;
}

template <typename F>
LimitEstimate one_sided_limit(F&& f, double x0, double side) {
  std::vector<double> samples;
  for (int k = kMinExp; k <= kMaxExp; ++k) {
    const double h = std::ldexp(1.0, -k);
    const double v = f(x0 + side * h);
    if (!std::isfinite(v)) {
      samples.clear();  // keep only the contiguous finite tail
      continue;
    }
    samples.push_back(v);
  }
  return richardson_limit(samples);
}

template <typename F>
LimitEstimate two_sided_limit(F&& f, double x0) {
  const LimitEstimate above = one_sided_limit(f, x0, +1.0);
  const LimitEstimate below = one_sided_limit(f, x0, -1.0);
  if (!above.exists || !below.exists) return {};
  if (!limits_agree(above.value, below.value)) return {};
  return {true, 0.5 * (above.value + below.value)};
}

struct StageResult {
  double raw = 0.0;
  double true_limit = std::numeric_limits<double>::quiet_NaN();
  double eps_limit = std::numeric_limits<double>::quiet_NaN();
  SingularityVerdict verdict = SingularityVerdict::Mismatch;
};

StageResult check_stage(const Expr& f, const std::string& x_name, const std::string& eps_name,
                        double x0) {
  StageResult r;
  r.raw = evaluate(f, {{x_name, x0}, {eps_name, 0.0}});
  if (std::isinf(r.raw)) {
    r.verdict = SingularityVerdict::NonRemovable;
    return r;
  }

  const LimitEstimate true_lim = two_sided_limit(
      [&](double xv) { return evaluate(f, {{x_name, xv}, {eps_name, 0.0}}); }, x0);
  const LimitEstimate eps_lim = one_sided_limit(
      [&](double ev) { return evaluate(f, {{x_name, x0}, {eps_name, ev}}); }, 0.0, +1.0);
  if (true_lim.exists) r.true_limit = true_lim.value;
  if (eps_lim.exists) r.eps_limit = eps_lim.value;

  if (true_lim.exists && eps_lim.exists && limits_agree(true_lim.value, eps_lim.value))
    r.verdict = SingularityVerdict::RemovableAndHandled;
  return r;
}

}  // namespace

SingularityReport verify_singularity_handling(const Expr& f_safe, const Expr& x, const Expr& eps,
                                              double x0) {
  if (!x.is_symbol() || !eps.is_symbol())
    throw std::invalid_argument("verify_singularity_handling: x and eps must be symbols");

  SingularityReport report;
  const StageResult value = check_stage(f_safe, x.name(), eps.name(), x0);
  report.raw_value_at_x0 = value.raw;
  report.true_limit = value.true_limit;
  report.eps_limit = value.eps_limit;
  report.verdict = value.verdict;
  if (report.verdict != SingularityVerdict::RemovableAndHandled) return report;

  const Expr df = differentiate(f_safe, x);
  const StageResult deriv = check_stage(df, x.name(), eps.name(), x0);
  report.derivative_true_limit = deriv.true_limit;
  report.derivative_eps_limit = deriv.eps_limit;
  if (deriv.verdict != SingularityVerdict::RemovableAndHandled) report.verdict = deriv.verdict;
  return report;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

std::string render_report(const std::string& name, double x0, const SingularityReport& r) {
  std::string out;
  out += "singularity check: " + name + " at x0 = " + fmt(x0) + "\n";
  out += "  raw value f(x0, 0)        : " + fmt(r.raw_value_at_x0) + "\n";
  out += "  lim x->x0 of f(x, 0)      : " + fmt(r.true_limit) + "\n";
  out += "  lim eps->0+ of f(x0, eps) : " + fmt(r.eps_limit) + "\n";
  out += "  d/dx limit (true)         : " + fmt(r.derivative_true_limit) + "\n";
  out += "  d/dx limit (eps)          : " + fmt(r.derivative_eps_limit) + "\n";
  out += "  verdict                   : " + std::string(to_string(r.verdict)) + "\n";
  return out;
}

}  // namespace symk
