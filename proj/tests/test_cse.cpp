#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "symk/cse.hpp"

using namespace symk;

namespace {

bool close(double a, double b, double tol) {
  if (std::isnan(a) || std::isnan(b)) return false;
  return std::fabs(a - b) <= tol * std::max({1.0, std::fabs(a), std::fabs(b)});
}

// The flattening example: func(a, b) = helper_1(a, b) - helper_2(a, b).
Expr build_func_ab(const Expr& a, const Expr& b) {
  const Expr helper_1 = pow(a, Expr(2)) + abs(a / b) / pow(b, Expr(2));
  const Expr helper_2 = abs(a / b) + (pow(a, Expr(2)) - pow(b, Expr(2)));
  return helper_1 - helper_2;
}

Expr random_expr(std::mt19937_64& rng, const std::vector<Expr>& syms, int depth) {
  if (depth <= 0) {
    const int p = std::uniform_int_distribution<int>(0, static_cast<int>(syms.size()))(rng);
    if (p == static_cast<int>(syms.size()))
      return Expr(std::uniform_int_distribution<int>(1, 4)(rng));
    return syms[p];
  }
  switch (std::uniform_int_distribution<int>(0, 6)(rng)) {
    case 0: return random_expr(rng, syms, depth - 1) + random_expr(rng, syms, depth - 1);
    case 1: return random_expr(rng, syms, depth - 1) - random_expr(rng, syms, depth - 1);
    case 2: return random_expr(rng, syms, depth - 1) * random_expr(rng, syms, depth - 1);
    case 3: return random_expr(rng, syms, depth - 1) / random_expr(rng, syms, depth - 1);
    case 4: return pow(random_expr(rng, syms, depth - 1), Expr(2));
    case 5: return sin(random_expr(rng, syms, depth - 1));
    default: return cos(random_expr(rng, syms, depth - 1));
  }
}

}  // namespace

TEST_CASE("flattening example func(a, b)") {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const Expr func = build_func_ab(a, b);

  const Expr outs[] = {func};
  const CseResult cse = eliminate(outs);
  CHECK(cse.temps.size() == 2);

  KernelSignature sig{"func_4_1", {{"a", Shape::scalar()}, {"b", Shape::scalar()}}, {{"res", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  CHECK(prog.temps.size() == 2);
  CHECK(prog.op_count == 6);

  // hand value at (a, b) = (2, 1): 1 - 2 + 2 = 1
  const double in[] = {2.0, 1.0};
  CHECK(prog.execute(in)[0] == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(0.2, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double av = dist(rng), bv = dist(rng);
    const double inputs[] = {av, bv};
    const double got = prog.execute(inputs)[0];
    const double want = evaluate(func, {{"a", av}, {"b", bv}});
    CHECK(close(got, want, 1e-12));
  }
}

TEST_CASE("trivial eliminations") {
  const Expr x = Expr::symbol("x");
  const Expr outs[] = {x};
  const CseResult cse = eliminate(outs);
  CHECK(cse.temps.empty());
  CHECK(cse.outputs[0] == x);

  KernelSignature sig{"identity", {{"x", Shape::scalar()}}, {{"y", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  CHECK(prog.op_count == 0);
  CHECK(prog.instructions().empty());
  const double in[] = {4.25};
  CHECK(prog.execute(in)[0] == 4.25);
}

TEST_CASE("shared product across two outputs") {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const Expr outs[] = {sin(a * b), cos(a * b)};
  const CseResult cse = eliminate(outs);
  REQUIRE(cse.temps.size() == 1);
  CHECK(cse.temps[0].second == a * b);

  KernelSignature sig{"sincos", {{"a", Shape::scalar()}, {"b", Shape::scalar()}}, {{"s", Shape::scalar()}, {"c", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  CHECK(prog.op_count == 3);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int i = 0; i < 5; ++i) {
    const double av = dist(rng), bv = dist(rng);
    const double in[] = {av, bv};
    const auto out = prog.execute(in);
    CHECK(close(out[0], std::sin(av * bv), 1e-14));
    CHECK(close(out[1], std::cos(av * bv), 1e-14));
  }
}

TEST_CASE("post-CSE uniqueness: no non-trivial node appears twice") {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b"), c = Expr::symbol("c");
  std::mt19937_64 rng(17);
  const std::vector<Expr> syms = {a, b, c};
  for (int it = 0; it < 50; ++it) {
    std::vector<Expr> outs;
    for (int k = 0; k < 3; ++k) outs.push_back(random_expr(rng, syms, 4));
    const CseResult cse = eliminate(outs);
    // walk every rhs/output as a tree and count occurrences of non-trivial nodes
    std::unordered_map<const void*, int> occurrences;
    std::vector<Expr> stack;
    for (const auto& [sym, rhs] : cse.temps) stack.push_back(rhs);
    for (const Expr& e : cse.outputs) stack.push_back(e);
    while (!stack.empty()) {
      const Expr e = stack.back();
      stack.pop_back();
      if (node_cost(e) >= 1) occurrences[e.node()] += 1;
      for (const Expr& k : e.children()) stack.push_back(k);
    }
    for (const auto& [node, n] : occurrences) CHECK(n == 1);
  }
}

TEST_CASE("semantic preservation and monotonicity on random kernels") {
  std::vector<Expr> syms;
  std::vector<Arg> inputs;
  for (const char* n : {"a", "b", "c", "d", "e"}) {
    syms.push_back(Expr::symbol(n));
    inputs.push_back({n, Shape::scalar()});
  }
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(0.3, 1.8);

  int points_checked = 0;
  for (int it = 0; it < 40; ++it) {
    std::vector<Expr> outs;
    for (int k = 0; k < 2; ++k) outs.push_back(random_expr(rng, syms, 4));

    std::int64_t per_occurrence = 0;
    for (const Expr& e : outs) per_occurrence += count_ops(e);

    KernelSignature sig{"k", inputs, {{"o0", Shape::scalar()}, {"o1", Shape::scalar()}}};
    const InstructionProgram prog = compile(sig, outs);
    CHECK(prog.op_count <= per_occurrence);

    ExecBuffer buf;
    std::vector<double> got(2);
    for (int p = 0; p < 25; ++p) {
      double in[5];
      Bindings binding;
      for (int i = 0; i < 5; ++i) {
        in[i] = dist(rng);
        binding[syms[i].name()] = in[i];
      }
      prog.execute(std::span<const double>(in, 5), got, buf);
      for (int k = 0; k < 2; ++k) {
        const double want = evaluate(outs[k], binding);
        if (!std::isfinite(want) || std::fabs(want) > 1e8) continue;
        CHECK(close(got[k], want, 1e-12));
        ++points_checked;
      }
    }
  }
  CHECK(points_checked > 1000);
}

TEST_CASE("compile is deterministic") {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const Expr outs[] = {build_func_ab(a, b), sin(a * b) + pow(b, Expr(2))};
  KernelSignature sig{"det", {{"a", Shape::scalar()}, {"b", Shape::scalar()}}, {{"r0", Shape::scalar()}, {"r1", Shape::scalar()}}};
  const InstructionProgram p1 = compile(sig, outs);
  const InstructionProgram p2 = compile(sig, outs);
  REQUIRE(p1.instructions().size() == p2.instructions().size());
  for (std::size_t i = 0; i < p1.instructions().size(); ++i) {
    CHECK(p1.instructions()[i].op == p2.instructions()[i].op);
    CHECK(p1.instructions()[i].a == p2.instructions()[i].a);
    CHECK(p1.instructions()[i].b == p2.instructions()[i].b);
  }
  CHECK(render_source(p1) == render_source(p2));
  CHECK(render_source(p1, SourceDialect::Pseudocode) == render_source(p2, SourceDialect::Pseudocode));
}

TEST_CASE("branchless: min/sign lower to single instructions") {
  const Expr x = Expr::symbol("x");
  const Expr snz = Expr(2) * min(Expr(0), sign(x)) + Expr(1);
  const Expr outs[] = {snz};
  KernelSignature sig{"snz", {{"x", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  bool has_min = false, has_sign = false;
  for (const Instr& i : prog.instructions()) {
    if (i.op == OpCode::Min) has_min = true;
    if (i.op == OpCode::Sign) has_sign = true;
  }
  CHECK(has_min);
  CHECK(has_sign);
  const double in0[] = {0.0};
  CHECK(prog.execute(in0)[0] == 1.0);
  const double in1[] = {-3.0};
  CHECK(prog.execute(in1)[0] == -1.0);
}

TEST_CASE("signature errors") {
  const Expr a = Expr::symbol("a"), z = Expr::symbol("zz");
  const Expr outs[] = {a + z};
  KernelSignature sig{"bad", {{"a", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  CHECK_THROWS_WITH_AS(compile(sig, outs), doctest::Contains("zz"), SignatureError);

  KernelSignature dup{"dup", {{"a", Shape::scalar()}, {"a", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  const Expr ok[] = {a};
  CHECK_THROWS_AS(compile(dup, ok), SignatureError);
}

TEST_CASE("execute validates shapes") {
  const Expr a = Expr::symbol("a");
  const Expr outs[] = {a * a};
  KernelSignature sig{"sq", {{"a", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);
  const double in[] = {1.0, 2.0};
  CHECK_THROWS_WITH_AS(prog.execute(in), doctest::Contains("expected 1"), std::invalid_argument);
}

TEST_CASE("rendered source") {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const Expr outs[] = {build_func_ab(a, b)};
  KernelSignature sig{"func_4_1", {{"a", Shape::scalar()}, {"b", Shape::scalar()}}, {{"res", Shape::scalar()}}};
  const InstructionProgram prog = compile(sig, outs);

  const std::string text = render_source(prog);
  CHECK(text.find("// Total ops: 6") != std::string::npos);
  std::size_t decls = 0, pos = 0;
  while ((pos = text.find("const Scalar _tmp", pos)) != std::string::npos) {
    ++decls;
    pos += 1;
  }
  CHECK(decls == 2);

  // 0-op kernel: single assignment, no temps
  const Expr id_outs[] = {a};
  KernelSignature id_sig{"ident", {{"a", Shape::scalar()}}, {{"r", Shape::scalar()}}};
  const std::string id_text = render_source(compile(id_sig, id_outs));
  CHECK(id_text.find("_tmp") == std::string::npos);
  CHECK(id_text.find("r[0] = a;") != std::string::npos);
}
