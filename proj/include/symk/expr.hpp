#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace symk {

// Exact rational p/q over int64, normalized so q > 0 and gcd(|p|, q) == 1.
// Arithmetic goes through __int128 intermediates; operations that would not
// fit back into int64 report failure so callers can decide what to do.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num) : num_(num) {}  // NOLINT: implicit by design
  Rational(std::int64_t num, std::int64_t den);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  bool is_zero() const { return num_ == 0; }
  bool is_one() const { return num_ == 1 && den_ == 1; }
  bool is_integer() const { return den_ == 1; }
  bool is_negative() const { return num_ < 0; }

  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  // Each returns false if the exact result does not fit in int64.
  static bool add(const Rational& a, const Rational& b, Rational* out);
  static bool mul(const Rational& a, const Rational& b, Rational* out);
  // base^exp for integer exp (negative allowed unless base is zero).
  static bool pow(const Rational& base, std::int64_t exp, Rational* out);

  Rational negated() const { return Rational(-num_, den_); }
  Rational abs() const { return Rational(num_ < 0 ? -num_ : num_, den_); }
  int sign() const { return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0); }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

std::string to_string(const Rational& r);

enum class ExprKind : std::uint8_t { Constant, Symbol, Add, Mul, Pow, Call };

enum class FnKind : std::uint8_t { Sin, Cos, Tan, Sqrt, Abs, Sign, Min, Max, Atan2 };

int fn_arity(FnKind fn);
std::string_view fn_name(FnKind fn);

using ConstantValue = std::variant<Rational, double>;

class ExprNode;

// Immutable handle into the hash-consed expression DAG. Copies are pointer
// copies; operator== is identity (structurally equal expressions are the
// same node, so identity equals structural equality).
class Expr {
 public:
  Expr();  // rational zero
  Expr(int v);
  Expr(std::int64_t v);
  Expr(double v);
  Expr(const Rational& r);

  static Expr symbol(std::string_view name);
  static Expr constant(const Rational& r);
  static Expr constant(double v);
  static Expr add(std::span<const Expr> children);
  static Expr mul(std::span<const Expr> children);
  static Expr pow(const Expr& base, const Expr& exponent);
  static Expr call(FnKind fn, std::span<const Expr> args);

  ExprKind kind() const;
  std::uint64_t id() const;  // structural hash, stable across runs

  bool is_constant() const { return kind() == ExprKind::Constant; }
  bool is_symbol() const { return kind() == ExprKind::Symbol; }
  bool is_rational_constant() const;
  bool is_float_constant() const;
  bool is_integer_constant() const;
  bool is_zero() const;  // rational 0 or float 0.0
  bool is_one() const;

  const Rational& rational_value() const;
  double float_value() const;
  double constant_as_double() const;

  const std::string& name() const;           // Symbol
  std::span<const Expr> children() const;    // Add/Mul children, Call args
  const Expr& base() const;                  // Pow
  const Expr& exponent() const;              // Pow
  FnKind fn() const;                         // Call

  friend bool operator==(const Expr& a, const Expr& b) { return a.node_ == b.node_; }
  friend bool operator!=(const Expr& a, const Expr& b) { return a.node_ != b.node_; }

  const ExprNode* node() const { return node_; }

 private:
  explicit Expr(const ExprNode* node) : node_(node) {}
  const ExprNode* node_;
  friend class ExprPool;
};

// Deterministic total order used for canonical child ordering: compares
// (variant rank, structural hash) and falls back to a deep structural
// comparison on hash collisions.
bool structural_less(const Expr& a, const Expr& b);

struct StructuralLess {
  bool operator()(const Expr& a, const Expr& b) const { return structural_less(a, b); }
};

// Arithmetic builders. a - b is Add(a, Mul(-1, b)); a / b is Mul(a, Pow(b, -1)).
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr operator+(const Expr& a);

inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
inline Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
inline Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }
inline Expr& operator/=(Expr& a, const Expr& b) { return a = a / b; }

Expr pow(const Expr& base, const Expr& exponent);
Expr sin(const Expr& x);
Expr cos(const Expr& x);
Expr tan(const Expr& x);
Expr sqrt(const Expr& x);
Expr abs(const Expr& x);
Expr sign(const Expr& x);
Expr min(const Expr& a, const Expr& b);
Expr max(const Expr& a, const Expr& b);
Expr atan2(const Expr& y, const Expr& x);

using Bindings = std::unordered_map<std::string, double>;

struct ExprHash {
  std::size_t operator()(const Expr& e) const noexcept {
    return reinterpret_cast<std::size_t>(e.node());
  }
};

using ExprMap = std::unordered_map<Expr, Expr, ExprHash>;

// Simultaneous substitution of symbols; replacements are not re-visited.
// Keys must be symbols. Unbound symbols pass through.
Expr substitute(const Expr& e, const ExprMap& bindings);
// Batch variant sharing one traversal cache across the expressions.
std::vector<Expr> substitute(std::span<const Expr> exprs, const ExprMap& bindings);

// Exact symbolic derivative. d|x|/dx = sign(x), d sign/dx = 0, min/max take
// the derivative of the active argument (ties select the first argument).
Expr differentiate(const Expr& e, const Expr& symbol);
std::vector<Expr> differentiate(std::span<const Expr> exprs, const Expr& symbol);

class MissingBindingError : public std::runtime_error {
 public:
  explicit MissingBindingError(const std::string& symbol)
      : std::runtime_error("no numeric binding for symbol '" + symbol + "'"), symbol_(symbol) {}
  const std::string& symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

// IEEE double evaluation; sign(0) = 0, domain violations yield NaN.
double evaluate(const Expr& e, const Bindings& bindings);

// Operation count of the expression as a tree (shared nodes counted once per
// occurrence). n-ary Add/Mul count n-1; a Mul led by the constant -1 counts
// one less (a fused negation); Pow with integer exponent +-1 counts 0,
// otherwise 1; every Call counts 1; symbols and constants count 0.
std::int64_t count_ops(const Expr& e);

// Same cost rule, but every distinct DAG node is counted once across the
// whole list (the best any CSE could do).
std::int64_t count_ops_unique(std::span<const Expr> exprs);

// Cost contribution of the node itself (children excluded) under the
// count_ops rule.
std::int64_t node_cost(const Expr& e);

// Free symbols in deterministic (name) order.
std::vector<Expr> free_symbols(const Expr& e);
std::vector<Expr> free_symbols(std::span<const Expr> exprs);
bool contains_symbol(const Expr& e, const Expr& symbol);

// Distributes products over sums and small integer powers of sums,
// collecting like terms into a flat monomial basis. Bails out (returns the
// input subtree unchanged) past an internal term-count limit.
Expr expand(const Expr& e);

// Infix debug rendering; stable across runs for identical builds.
std::string to_string(const Expr& e);

std::ostream& operator<<(std::ostream& os, const Expr& e);

}  // namespace symk

template <>
struct std::hash<symk::Expr> {
  std::size_t operator()(const symk::Expr& e) const noexcept {
    return symk::ExprHash{}(e);
  }
};
