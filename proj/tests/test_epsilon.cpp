#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "symk/cse.hpp"
#include "symk/epsilon.hpp"

using namespace symk;

TEST_CASE("sign_no_zero") {
  const Expr x = Expr::symbol("x");
  const Expr snz = sign_no_zero(x);
  CHECK(snz == Expr(2) * min(Expr(0), sign(x)) + Expr(1));

  CHECK(evaluate(snz, {{"x", 0.0}}) == 1.0);
  CHECK(evaluate(snz, {{"x", -0.0}}) == 1.0);
  CHECK(evaluate(snz, {{"x", -3.0}}) == -1.0);
  CHECK(evaluate(snz, {{"x", 2.5}}) == 1.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = evaluate(snz, {{"x", dist(rng)}});
    CHECK((v == 1.0 || v == -1.0));
  }
}

TEST_CASE("epsilonize") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const Expr f = sin(x) / x;

  const Expr safe = epsilonize(f, x, eps);
  const Expr shifted = x + sign_no_zero(x) * eps;
  CHECK(safe == sin(shifted) / shifted);

  // eps = 0 leaves the function unchanged
  CHECK(epsilonize(f, x, Expr(0)) == f);

  CHECK(evaluate(safe, {{"x", 0.0}, {"eps", kDefaultEpsilon}}) == doctest::Approx(1.0).epsilon(1e-9));

  // singularity away from zero
  const Expr g = sin(x - Expr(2)) / (x - Expr(2));
  const Expr g_safe = epsilonize(g, x, eps, 2.0);
  CHECK(evaluate(g_safe, {{"x", 2.0}, {"eps", kDefaultEpsilon}}) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("branchless_select") {
  const Expr z = Expr::symbol("z");
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const Expr sel = branchless_select(z - Expr(3), a, b);
  auto at = [&](double zv) { return evaluate(sel, {{"z", zv}, {"a", 10.0}, {"b", 20.0}}); };
  CHECK(at(2.0) == 10.0);
  CHECK(at(3.0) == 10.0);  // boundary: sign(0) = 0 keeps the first branch
  CHECK(at(5.0) == 20.0);
}

TEST_CASE("verify: epsilonized sinc is removable and handled") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const Expr safe = epsilonize(sin(x) / x, x, eps);

  const SingularityReport r = verify_singularity_handling(safe, x, eps, 0.0);
  CHECK(std::isnan(r.raw_value_at_x0));
  CHECK(r.verdict == SingularityVerdict::RemovableAndHandled);
  CHECK(r.true_limit == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.eps_limit == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::fabs(r.derivative_true_limit) < 1e-6);
  CHECK(std::fabs(r.derivative_eps_limit) < 1e-6);
}

TEST_CASE("verify: 1/x is non-removable") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const Expr safe = epsilonize(Expr(1) / x, x, eps);
  const SingularityReport r = verify_singularity_handling(safe, x, eps, 0.0);
  CHECK(std::isinf(r.raw_value_at_x0));
  CHECK(r.verdict == SingularityVerdict::NonRemovable);
}

TEST_CASE("verify: wrong shift is flagged") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  // Shifts only the denominator: value limit in x is 2 but the eps path gives 1.
  const Expr wrong = sin(x) / (x + eps) + Expr(1);
  const SingularityReport r = verify_singularity_handling(wrong, x, eps, 0.0);
  CHECK(r.verdict == SingularityVerdict::Mismatch);
}

TEST_CASE("verify: derivative side limits disagree for guarded abs") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  // sqrt(x^2 + eps^2): value fine (0), derivative tends to -1/+1 by side.
  const Expr guarded_abs = sqrt(pow(x, Expr(2)) + pow(eps, Expr(2)));
  const SingularityReport r = verify_singularity_handling(guarded_abs, x, eps, 0.0);
  CHECK(r.verdict == SingularityVerdict::Mismatch);
  CHECK(r.true_limit == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("verify: numerator-and-denominator shift passes both stages") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  // (sin(x) + eps)/(x + eps): both limits 1, both derivative limits 0.
  const Expr f = (sin(x) + eps) / (x + eps);
  const SingularityReport r = verify_singularity_handling(f, x, eps, 0.0);
  CHECK(r.verdict == SingularityVerdict::RemovableAndHandled);
}

TEST_CASE("Lipschitz error bound for sinc") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const Expr safe = epsilonize(sin(x) / x, x, eps);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int i = 0; i < 10000; ++i) {
    double xv = dist(rng);
    if (xv == 0.0) continue;
    const double exact = std::sin(xv) / xv;
    const double guarded = evaluate(safe, {{"x", xv}, {"eps", kDefaultEpsilon}});
    CHECK(std::fabs(guarded - exact) <= kDefaultEpsilon);
  }
}

TEST_CASE("epsilonized kernels stay branchless") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const Expr safe = epsilonize(sin(x) / x, x, eps);
  const Expr outs[] = {safe};
  KernelSignature sig{"sinc_safe", {{"x", Shape::scalar()}, {"eps", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  bool has_min = false;
  for (const Instr& i : prog.instructions()) {
    // every opcode is a pure arithmetic instruction; min/sign encode the snz
    CHECK(static_cast<int>(i.op) <= static_cast<int>(OpCode::Atan2));
    if (i.op == OpCode::Min) has_min = true;
  }
  CHECK(has_min);
  const double in[] = {0.0, kDefaultEpsilon};
  CHECK(prog.execute(in)[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("report rendering names the verdict") {
  const Expr x = Expr::symbol("x");
  const Expr eps = Expr::symbol("eps");
  const SingularityReport r =
      verify_singularity_handling(epsilonize(sin(x) / x, x, eps), x, eps, 0.0);
  const std::string text = render_report("sinc", 0.0, r);
  CHECK(text.find("removable-and-handled") != std::string::npos);
  CHECK(text.find("verdict") != std::string::npos);
}
