#include "symk/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "symk/scalar_ops.hpp"

namespace symk {

namespace {

using int128 = __int128;

bool fits_int64(int128 v) {
  return v >= static_cast<int128>(INT64_MIN) && v <= static_cast<int128>(INT64_MAX);
}

std::int64_t gcd64(std::int64_t a, std::int64_t b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  return std::gcd(a, b);
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("Rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = gcd64(num, den);
  num_ = g == 0 ? 0 : num / g;
  den_ = g == 0 ? 1 : den / g;
}

bool Rational::add(const Rational& a, const Rational& b, Rational* out) {
  const int128 num = static_cast<int128>(a.num_) * b.den_ + static_cast<int128>(b.num_) * a.den_;
  const int128 den = static_cast<int128>(a.den_) * b.den_;
  const int128 g = [&] {
    int128 x = num < 0 ? -num : num, y = den;
    while (y != 0) {
      int128 t = x % y;
      x = y;
      y = t;
    }
    return x == 0 ? int128{1} : x;
  }();
  if (!fits_int64(num / g) || !fits_int64(den / g)) return false;
  *out = Rational(static_cast<std::int64_t>(num / g), static_cast<std::int64_t>(den / g));
  return true;
}

bool Rational::mul(const Rational& a, const Rational& b, Rational* out) {
  // Cross-reduce first to keep intermediates small.
  const std::int64_t g1 = gcd64(a.num_, b.den_);
  const std::int64_t g2 = gcd64(b.num_, a.den_);
  const int128 num = static_cast<int128>(a.num_ / (g1 ? g1 : 1)) * (b.num_ / (g2 ? g2 : 1));
  const int128 den = static_cast<int128>(a.den_ / (g2 ? g2 : 1)) * (b.den_ / (g1 ? g1 : 1));
  if (!fits_int64(num) || !fits_int64(den)) return false;
  *out = Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
  return true;
}

bool Rational::pow(const Rational& base, std::int64_t exp, Rational* out) {
  if (exp == 0) {
    *out = Rational(1);
    return true;
  }
  if (base.is_zero() && exp < 0) return false;
  Rational b = base;
  std::int64_t e = exp;
  if (e < 0) {
    if (b.num_ == 0) return false;
    b = Rational(b.den_, b.num_);
    e = -e;
  }
  if (e > 256) return false;  // avoid pathological blowups
  Rational acc(1);
  while (e > 0) {
    if (e & 1) {
      if (!mul(acc, b, &acc)) return false;
    }
    e >>= 1;
    if (e > 0 && !mul(b, b, &b)) return false;
  }
  *out = acc;
  return true;
}

bool operator<(const Rational& a, const Rational& b) {
  return static_cast<int128>(a.num()) * b.den() < static_cast<int128>(b.num()) * a.den();
}

std::string to_string(const Rational& r) {
  std::string s = std::to_string(r.num());
  if (!r.is_integer()) s += "/" + std::to_string(r.den());
  return s;
}

int fn_arity(FnKind fn) {
  switch (fn) {
    case FnKind::Sin:
    case FnKind::Cos:
    case FnKind::Tan:
    case FnKind::Sqrt:
    case FnKind::Abs:
    case FnKind::Sign:
      return 1;
    case FnKind::Min:
    case FnKind::Max:
    case FnKind::Atan2:
      return 2;
  }
  return 0;
}

std::string_view fn_name(FnKind fn) {
  switch (fn) {
    case FnKind::Sin: return "sin";
    case FnKind::Cos: return "cos";
    case FnKind::Tan: return "tan";
    case FnKind::Sqrt: return "sqrt";
    case FnKind::Abs: return "abs";
    case FnKind::Sign: return "sign";
    case FnKind::Min: return "min";
    case FnKind::Max: return "max";
    case FnKind::Atan2: return "atan2";
  }
  return "?";
}

class ExprNode {
 public:
  ExprKind kind;
  FnKind fn = FnKind::Sin;
  std::uint64_t hash = 0;
  ConstantValue constant = Rational(0);
  std::string name;
  std::vector<Expr> kids;
};

namespace {

constexpr std::uint64_t kMix = 0x9e3779b97f4a7c15ull;

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  h ^= v + kMix + (h << 6) + (h >> 2);
  return h;
}

std::uint64_t hash_u64(std::uint64_t v) {
  v ^= v >> 33;
  v *= 0xff51afd7ed558ccdull;
  v ^= v >> 33;
  v *= 0xc4ceb9fe1a85ec53ull;
  v ^= v >> 33;
  return v;
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t hash_constant(const ConstantValue& c) {
  if (std::holds_alternative<Rational>(c)) {
    const auto& r = std::get<Rational>(c);
    return hash_combine(hash_u64(static_cast<std::uint64_t>(r.num())),
                        hash_u64(static_cast<std::uint64_t>(r.den())));
  }
  std::uint64_t bits;
  const double d = std::get<double>(c);
  static_assert(sizeof(bits) == sizeof(d));
  std::memcpy(&bits, &d, sizeof(bits));
  return hash_combine(0x5bd1e995u, hash_u64(bits));
}

bool constant_equal(const ConstantValue& a, const ConstantValue& b) {
  if (a.index() != b.index()) return false;
  if (std::holds_alternative<Rational>(a)) return std::get<Rational>(a) == std::get<Rational>(b);
  std::uint64_t ba, bb;
  const double da = std::get<double>(a), db = std::get<double>(b);
  std::memcpy(&ba, &da, sizeof(ba));
  std::memcpy(&bb, &db, sizeof(bb));
  return ba == bb;  // bit equality: NaN payloads interned consistently
}

std::uint64_t node_hash(const ExprNode& n) {
  std::uint64_t h = hash_u64(static_cast<std::uint64_t>(n.kind) * 1315423911u + 7);
  switch (n.kind) {
    case ExprKind::Constant:
      h = hash_combine(h, hash_constant(n.constant));
      break;
    case ExprKind::Symbol:
      h = hash_combine(h, hash_string(n.name));
      break;
    case ExprKind::Call:
      h = hash_combine(h, static_cast<std::uint64_t>(n.fn) + 31);
      [[fallthrough]];
    default:
      for (const Expr& k : n.kids) h = hash_combine(h, k.id());
  }
  return h;
}

struct NodePtrHash {
  std::size_t operator()(const ExprNode* n) const noexcept { return n->hash; }
};

// Shallow equality: children compare by identity, which is sound because
// children are already interned.
struct NodePtrEq {
  bool operator()(const ExprNode* a, const ExprNode* b) const noexcept {
    if (a->kind != b->kind || a->hash != b->hash) return false;
    switch (a->kind) {
      case ExprKind::Constant: return constant_equal(a->constant, b->constant);
      case ExprKind::Symbol: return a->name == b->name;
      case ExprKind::Call:
        if (a->fn != b->fn) return false;
        break;
      default: break;
    }
    if (a->kids.size() != b->kids.size()) return false;
    for (std::size_t i = 0; i < a->kids.size(); ++i)
      if (a->kids[i] != b->kids[i]) return false;
    return true;
  }
};

}  // namespace

// Global intern pool. Nodes live for the lifetime of the process; the table
// is the single synchronization point and is safe for concurrent interning.
class ExprPool {
 public:
  static ExprPool& instance() {
    static ExprPool* pool = new ExprPool();  // leaked intentionally
    return *pool;
  }

  Expr intern(ExprNode&& proto) {
    proto.hash = node_hash(proto);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = table_.find(&proto);
    if (it != table_.end()) return Expr(*it);
    nodes_.push_back(std::make_unique<ExprNode>(std::move(proto)));
    const ExprNode* stored = nodes_.back().get();
    table_.insert(stored);
    return Expr(stored);
  }

 private:
  std::mutex mu_;
  std::deque<std::unique_ptr<ExprNode>> nodes_;
  std::unordered_set<const ExprNode*, NodePtrHash, NodePtrEq> table_;
};

namespace {

Expr intern_constant(const Rational& r) {
  ExprNode n;
  n.kind = ExprKind::Constant;
  n.constant = r;
  return ExprPool::instance().intern(std::move(n));
}

Expr intern_constant(const Rational& r);

Expr intern_constant(double v) {
  // Floats that are exactly small dyadic rationals (2.0, 0.5, 0.25, ...)
  // intern as rationals so they share nodes with exact integer arithmetic.
  if (std::isfinite(v)) {
    const double scaled = v * 1024.0;
    if (scaled == std::rint(scaled) && std::fabs(scaled) < 9.0e15)
      return intern_constant(Rational(static_cast<std::int64_t>(scaled), 1024));
  }
  ExprNode n;
  n.kind = ExprKind::Constant;
  n.constant = v;
  return ExprPool::instance().intern(std::move(n));
}

// Children must already be canonical for the kind in question.
Expr intern_nary(ExprKind kind, std::vector<Expr> kids, FnKind fn = FnKind::Sin) {
  ExprNode n;
  n.kind = kind;
  n.fn = fn;
  n.kids = std::move(kids);
  return ExprPool::instance().intern(std::move(n));
}

int kind_rank(ExprKind k) {
  switch (k) {
    case ExprKind::Constant: return 0;
    case ExprKind::Symbol: return 1;
    case ExprKind::Add: return 2;
    case ExprKind::Mul: return 3;
    case ExprKind::Pow: return 4;
    case ExprKind::Call: return 5;
  }
  return 6;
}

// Deep comparison, only used to break (rank, hash) ties deterministically.
int deep_compare(const Expr& a, const Expr& b);

int deep_compare_kids(std::span<const Expr> a, std::span<const Expr> b) {
  if (a.size() != b.size()) return a.size() < b.size() ? -1 : 1;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int c = deep_compare(a[i], b[i]);
    if (c != 0) return c;
  }
  return 0;
}

int deep_compare(const Expr& a, const Expr& b) {
  if (a == b) return 0;
  const int ra = kind_rank(a.kind()), rb = kind_rank(b.kind());
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a.kind()) {
    case ExprKind::Constant: {
      const bool fa = a.is_float_constant(), fb = b.is_float_constant();
      if (fa != fb) return fa ? 1 : -1;
      if (fa) {
        const double x = a.float_value(), y = b.float_value();
        if (x != y) return x < y ? -1 : 1;
        return 0;
      }
      const Rational &x = a.rational_value(), &y = b.rational_value();
      if (x == y) return 0;
      return x < y ? -1 : 1;
    }
    case ExprKind::Symbol:
      return a.name().compare(b.name()) < 0 ? -1 : 1;
    case ExprKind::Call:
      if (a.fn() != b.fn()) return static_cast<int>(a.fn()) < static_cast<int>(b.fn()) ? -1 : 1;
      return deep_compare_kids(a.children(), b.children());
    default:
      return deep_compare_kids(a.children(), b.children());
  }
}

}  // namespace

bool structural_less(const Expr& a, const Expr& b) {
  if (a == b) return false;
  const int ra = kind_rank(a.kind()), rb = kind_rank(b.kind());
  if (ra != rb) return ra < rb;
  if (a.id() != b.id()) return a.id() < b.id();
  return deep_compare(a, b) < 0;
}

// ---------------------------------------------------------------------------
// Canonicalizing constructors

namespace {

Expr make_add(std::span<const Expr> xs);
Expr make_mul(std::span<const Expr> xs);
Expr make_pow(const Expr& base, const Expr& exponent);

// Negation of canonical nodes without re-entering the Mul constructor;
// used to sign-normalize Add factors inside products.
Expr negate_term(const Expr& t);
Expr negate_add(const Expr& add);

Expr make_add2(const Expr& a, const Expr& b) {
  const Expr xs[2] = {a, b};
  return make_add(xs);
}

Expr make_mul2(const Expr& a, const Expr& b) {
  const Expr xs[2] = {a, b};
  return make_mul(xs);
}

// Rebuild a Mul from already-canonical children with the leading constant
// stripped (still sorted, still collected), without re-canonicalizing.
Expr mul_from_canonical_tail(std::span<const Expr> kids) {
  if (kids.size() == 1) return kids[0];
  return intern_nary(ExprKind::Mul, std::vector<Expr>(kids.begin(), kids.end()));
}

Expr negate_term(const Expr& t) {
  if (t.is_rational_constant()) return intern_constant(t.rational_value().negated());
  if (t.is_float_constant()) return intern_constant(-t.float_value());
  if (t.kind() == ExprKind::Mul) {
    auto kids = t.children();
    if (kids[0].is_constant()) {
      const Expr flipped = negate_term(kids[0]);
      if (flipped.is_one()) return mul_from_canonical_tail(kids.subspan(1));
      std::vector<Expr> out;
      out.reserve(kids.size());
      out.push_back(flipped);
      out.insert(out.end(), kids.begin() + 1, kids.end());
      return intern_nary(ExprKind::Mul, std::move(out));
    }
    std::vector<Expr> out;
    out.reserve(kids.size() + 1);
    out.push_back(intern_constant(Rational(-1)));
    out.insert(out.end(), kids.begin(), kids.end());
    return intern_nary(ExprKind::Mul, std::move(out));
  }
  return intern_nary(ExprKind::Mul, {intern_constant(Rational(-1)), t});
}

Expr negate_add(const Expr& add) {
  std::vector<Expr> terms;
  terms.reserve(add.children().size());
  for (const Expr& t : add.children()) terms.push_back(negate_term(t));
  std::sort(terms.begin(), terms.end(), StructuralLess{});
  return intern_nary(ExprKind::Add, std::move(terms));
}

// Exact rational accumulation that degrades to IEEE double once a float
// enters (or the rational arithmetic overflows). Floats are contagious, as
// in SymPy; rational-only expressions stay exact.
struct CoeffAccum {
  Rational r{0};
  double f = 0.0;
  bool is_float = false;

  void to_float() {
    if (!is_float) {
      f = r.to_double();
      is_float = true;
    }
  }
  void add(const Rational& v) {
    if (is_float) {
      f += v.to_double();
    } else if (!Rational::add(r, v, &r)) {
      to_float();
      f += v.to_double();
    }
  }
  void add(double v) {
    to_float();
    f += v;
  }
  void add(const Expr& constant) {
    if (constant.is_rational_constant())
      add(constant.rational_value());
    else
      add(constant.float_value());
  }
  bool is_zero() const { return is_float ? f == 0.0 : r.is_zero(); }
  bool is_one() const { return is_float ? f == 1.0 : r.is_one(); }
  Expr to_expr() const { return is_float ? intern_constant(f) : intern_constant(r); }
};

// term == coeff * core with a numeric coefficient (1 when none).
std::pair<Expr, Expr> split_coeff(const Expr& e) {
  if (e.kind() == ExprKind::Mul) {
    auto kids = e.children();
    if (kids[0].is_constant()) return {kids[0], mul_from_canonical_tail(kids.subspan(1))};
  }
  return {intern_constant(Rational(1)), e};
}

Expr make_add(std::span<const Expr> xs) {
  std::vector<Expr> flat;
  flat.reserve(xs.size());
  for (const Expr& x : xs) {
    if (x.kind() == ExprKind::Add) {
      auto kids = x.children();
      flat.insert(flat.end(), kids.begin(), kids.end());
    } else {
      flat.push_back(x);
    }
  }

  CoeffAccum constant;
  std::map<Expr, CoeffAccum, StructuralLess> terms;

  for (const Expr& x : flat) {
    if (x.is_constant()) {
      constant.add(x);
      continue;
    }
    auto [coeff, core] = split_coeff(x);
    terms[core].add(coeff);
  }

  std::vector<Expr> out;
  if (!constant.is_zero()) out.push_back(constant.to_expr());
  for (const auto& [core, coeff] : terms) {
    if (coeff.is_zero()) continue;
    if (coeff.is_one()) {
      out.push_back(core);
      continue;
    }
    const Expr term = make_mul2(coeff.to_expr(), core);
    if (term.kind() == ExprKind::Add) {
      // a -1 coefficient on a sum core distributes; keep the result flat
      auto tk = term.children();
      out.insert(out.end(), tk.begin(), tk.end());
    } else {
      out.push_back(term);
    }
  }

  if (out.empty()) return intern_constant(Rational(0));
  if (out.size() == 1) return out[0];
  std::sort(out.begin(), out.end(), StructuralLess{});
  return intern_nary(ExprKind::Add, std::move(out));
}

Expr make_mul(std::span<const Expr> xs) {
  std::vector<Expr> flat;
  flat.reserve(xs.size());
  for (const Expr& x : xs) {
    if (x.kind() == ExprKind::Mul) {
      auto kids = x.children();
      flat.insert(flat.end(), kids.begin(), kids.end());
    } else {
      flat.push_back(x);
    }
  }

  Rational rprod(1);
  double fprod = 1.0;
  bool is_float = false;
  bool negate = false;
  // base -> exponents to be summed
  std::map<Expr, std::vector<Expr>, StructuralLess> powers;

  for (const Expr& x : flat) {
    if (x.is_rational_constant()) {
      const Rational& r = x.rational_value();
      if (r.is_zero()) return intern_constant(Rational(0));
      if (is_float) {
        fprod *= r.to_double();
      } else if (!Rational::mul(rprod, r, &rprod)) {
        fprod = rprod.to_double() * r.to_double();
        is_float = true;
      }
      continue;
    }
    if (x.is_float_constant()) {
      if (!is_float) {
        fprod = rprod.to_double();
        is_float = true;
      }
      fprod *= x.float_value();
      continue;
    }
    Expr base = x;
    Expr exp = intern_constant(Rational(1));
    if (x.kind() == ExprKind::Pow) {
      base = x.base();
      exp = x.exponent();
    }
    // Sum factors carry a canonical sign: of A and -A the smaller in the
    // canonical order is kept, with the sign folded into the coefficient
    // (for integer exponents), so a - b and b - a share one node.
    if (base.kind() == ExprKind::Add && exp.is_rational_constant() &&
        exp.rational_value().is_integer()) {
      const Expr neg = negate_add(base);
      if (structural_less(neg, base)) {
        base = neg;
        if (exp.rational_value().num() % 2 != 0) negate = !negate;
      }
    }
    powers[base].push_back(exp);
  }
  if (is_float && fprod == 0.0) return intern_constant(0.0);
  if (negate) {
    if (is_float)
      fprod = -fprod;
    else
      rprod = rprod.negated();
  }

  std::vector<Expr> out;
  for (const auto& [base, exps] : powers) {
    const Expr e = exps.size() == 1 ? exps[0] : make_add(exps);
    if (e.is_zero()) continue;  // base^0 == 1
    if (e.is_one())
      out.push_back(base);
    else
      out.push_back(make_pow(base, e));
  }
  std::sort(out.begin(), out.end(), StructuralLess{});

  std::vector<Expr> kids;
  const bool nontrivial = is_float ? fprod != 1.0 : !rprod.is_one();
  if (nontrivial) kids.push_back(is_float ? intern_constant(fprod) : intern_constant(rprod));
  kids.insert(kids.end(), out.begin(), out.end());

  if (kids.empty()) return intern_constant(Rational(1));
  if (kids.size() == 1) return kids[0];

  // Signs distribute over sums (-(a + b) -> -a - b); other coefficients stay
  // factored so c*(a + b) shares the inner sum with its other uses.
  if (kids.size() == 2 && kids[0].is_rational_constant() &&
      kids[0].rational_value() == Rational(-1) && kids[1].kind() == ExprKind::Add) {
    return negate_add(kids[1]);
  }

  return intern_nary(ExprKind::Mul, std::move(kids));
}

Expr make_pow(const Expr& base, const Expr& exponent) {
  if (exponent.is_rational_constant()) {
    const Rational& e = exponent.rational_value();
    if (e.is_zero()) return intern_constant(Rational(1));
    if (e.is_one()) return base;
    // Integer powers absorb a canonical sign flip of the base.
    if (e.is_integer()) {
      Expr stripped = base;
      bool flipped = false;
      if (base.kind() == ExprKind::Mul && base.children()[0].is_rational_constant() &&
          base.children()[0].rational_value().is_negative()) {
        stripped = negate_term(base);
        flipped = true;
      } else if (base.kind() == ExprKind::Add) {
        const Expr neg = negate_add(base);
        if (structural_less(neg, base)) {
          stripped = neg;
          flipped = true;
        }
      }
      if (flipped) {
        const Expr p = make_pow(stripped, exponent);
        return e.num() % 2 == 0 ? p : make_mul2(intern_constant(Rational(-1)), p);
      }
    }
    if (base.is_rational_constant()) {
      const Rational& b = base.rational_value();
      if (b.is_one()) return base;
      if (b.is_zero()) {
        if (e.sign() > 0) return base;
        // 0^negative kept symbolic; evaluates to inf
      } else if (e.is_integer()) {
        Rational folded;
        if (Rational::pow(b, e.num(), &folded)) return intern_constant(folded);
      }
      // non-integer rational exponents stay exact (e.g. 2^(1/2))
    }
    if (base.is_float_constant())
      return intern_constant(scalar_ops::eval_pow(base.float_value(), e.to_double()));
  } else if (exponent.is_float_constant()) {
    const double e = exponent.float_value();
    if (e == 0.0) return intern_constant(Rational(1));
    if (e == 1.0) return base;
    if (base.is_constant())
      return intern_constant(scalar_ops::eval_pow(base.constant_as_double(), e));
  }
  if (base.is_rational_constant() && base.rational_value().is_one()) return base;
  return intern_nary(ExprKind::Pow, {base, exponent});
}

Expr fold_call(FnKind fn, std::span<const Expr> args, bool* folded) {
  *folded = true;
  const Expr& a = args[0];
  switch (fn) {
    case FnKind::Abs:
      if (a.is_rational_constant()) return intern_constant(a.rational_value().abs());
      if (a.is_float_constant()) return intern_constant(std::fabs(a.float_value()));
      break;
    case FnKind::Sign:
      if (a.is_rational_constant()) return intern_constant(Rational(a.rational_value().sign()));
      if (a.is_float_constant()) return intern_constant(scalar_ops::sign_value(a.float_value()));
      break;
    case FnKind::Min:
    case FnKind::Max: {
      const Expr& b = args[1];
      if (a.is_rational_constant() && b.is_rational_constant()) {
        const bool a_less = a.rational_value() < b.rational_value() ||
                            a.rational_value() == b.rational_value();
        return (fn == FnKind::Min) == a_less ? a : b;
      }
      if (a.is_constant() && b.is_constant())
        return intern_constant(scalar_ops::eval_binary(fn, a.constant_as_double(),
                                                       b.constant_as_double()));
      break;
    }
    case FnKind::Sin:
    case FnKind::Cos:
    case FnKind::Tan:
    case FnKind::Sqrt:
      if (a.is_float_constant())
        return intern_constant(scalar_ops::eval_unary(fn, a.float_value()));
      break;
    case FnKind::Atan2:
      if (a.is_float_constant() && args[1].is_float_constant())
        return intern_constant(std::atan2(a.float_value(), args[1].float_value()));
      break;
  }
  *folded = false;
  return a;
}

Expr make_call(FnKind fn, std::span<const Expr> args) {
  if (static_cast<int>(args.size()) != fn_arity(fn))
    throw std::invalid_argument(std::string(fn_name(fn)) + " expects " +
                                std::to_string(fn_arity(fn)) + " argument(s), got " +
                                std::to_string(args.size()));
  bool folded = false;
  Expr r = fold_call(fn, args, &folded);
  if (folded) return r;
  return intern_nary(ExprKind::Call, std::vector<Expr>(args.begin(), args.end()), fn);
}

}  // namespace

// ---------------------------------------------------------------------------
// Expr members

Expr::Expr() : node_(intern_constant(Rational(0)).node_) {}
Expr::Expr(int v) : node_(intern_constant(Rational(v)).node_) {}
Expr::Expr(std::int64_t v) : node_(intern_constant(Rational(v)).node_) {}
Expr::Expr(double v) : node_(intern_constant(v).node_) {}
Expr::Expr(const Rational& r) : node_(intern_constant(r).node_) {}

Expr Expr::symbol(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("symbol name must be non-empty");
  ExprNode n;
  n.kind = ExprKind::Symbol;
  n.name = std::string(name);
  return ExprPool::instance().intern(std::move(n));
}

Expr Expr::constant(const Rational& r) { return intern_constant(r); }
Expr Expr::constant(double v) { return intern_constant(v); }
Expr Expr::add(std::span<const Expr> children) { return make_add(children); }
Expr Expr::mul(std::span<const Expr> children) { return make_mul(children); }
Expr Expr::pow(const Expr& base, const Expr& exponent) { return make_pow(base, exponent); }
Expr Expr::call(FnKind fn, std::span<const Expr> args) { return make_call(fn, args); }

ExprKind Expr::kind() const { return node_->kind; }
std::uint64_t Expr::id() const { return node_->hash; }

bool Expr::is_rational_constant() const {
  return is_constant() && std::holds_alternative<Rational>(node_->constant);
}

bool Expr::is_float_constant() const {
  return is_constant() && std::holds_alternative<double>(node_->constant);
}

bool Expr::is_integer_constant() const {
  return is_rational_constant() && rational_value().is_integer();
}

bool Expr::is_zero() const {
  if (is_rational_constant()) return rational_value().is_zero();
  if (is_float_constant()) return float_value() == 0.0;
  return false;
}

bool Expr::is_one() const {
  if (is_rational_constant()) return rational_value().is_one();
  if (is_float_constant()) return float_value() == 1.0;
  return false;
}

const Rational& Expr::rational_value() const { return std::get<Rational>(node_->constant); }
double Expr::float_value() const { return std::get<double>(node_->constant); }

double Expr::constant_as_double() const {
  return is_rational_constant() ? rational_value().to_double() : float_value();
}

const std::string& Expr::name() const { return node_->name; }
std::span<const Expr> Expr::children() const { return node_->kids; }
const Expr& Expr::base() const { return node_->kids[0]; }
const Expr& Expr::exponent() const { return node_->kids[1]; }
FnKind Expr::fn() const { return node_->fn; }

// ---------------------------------------------------------------------------
// Operators and elementary functions

Expr operator+(const Expr& a, const Expr& b) { return make_add2(a, b); }
Expr operator*(const Expr& a, const Expr& b) { return make_mul2(a, b); }
Expr operator-(const Expr& a, const Expr& b) { return make_add2(a, make_mul2(Expr(-1), b)); }
Expr operator/(const Expr& a, const Expr& b) { return make_mul2(a, make_pow(b, Expr(-1))); }
Expr operator-(const Expr& a) { return make_mul2(Expr(-1), a); }
Expr operator+(const Expr& a) { return a; }

Expr pow(const Expr& base, const Expr& exponent) { return make_pow(base, exponent); }

namespace {
Expr call1(FnKind fn, const Expr& x) {
  const Expr args[1] = {x};
  return make_call(fn, args);
}
Expr call2(FnKind fn, const Expr& a, const Expr& b) {
  const Expr args[2] = {a, b};
  return make_call(fn, args);
}
}  // namespace

Expr sin(const Expr& x) { return call1(FnKind::Sin, x); }
Expr cos(const Expr& x) { return call1(FnKind::Cos, x); }
Expr tan(const Expr& x) { return call1(FnKind::Tan, x); }
Expr sqrt(const Expr& x) { return call1(FnKind::Sqrt, x); }
Expr abs(const Expr& x) { return call1(FnKind::Abs, x); }
Expr sign(const Expr& x) { return call1(FnKind::Sign, x); }
Expr min(const Expr& a, const Expr& b) { return call2(FnKind::Min, a, b); }
Expr max(const Expr& a, const Expr& b) { return call2(FnKind::Max, a, b); }
Expr atan2(const Expr& y, const Expr& x) { return call2(FnKind::Atan2, y, x); }

// ---------------------------------------------------------------------------
// Substitution

namespace {

Expr substitute_impl(const Expr& e, const ExprMap& bindings, ExprMap& memo) {
  if (auto hit = bindings.find(e); hit != bindings.end()) return hit->second;
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Symbol:
      return e;
    default:
      break;
  }
  if (auto hit = memo.find(e); hit != memo.end()) return hit->second;
  std::vector<Expr> kids;
  kids.reserve(e.children().size());
  bool changed = false;
  for (const Expr& k : e.children()) {
    kids.push_back(substitute_impl(k, bindings, memo));
    changed = changed || kids.back() != k;
  }
  Expr result = e;
  if (changed) {
    switch (e.kind()) {
      case ExprKind::Add: result = make_add(kids); break;
      case ExprKind::Mul: result = make_mul(kids); break;
      case ExprKind::Pow: result = make_pow(kids[0], kids[1]); break;
      case ExprKind::Call: result = make_call(e.fn(), kids); break;
      default: break;
    }
  }
  memo.emplace(e, result);
  return result;
}

}  // namespace

Expr substitute(const Expr& e, const ExprMap& bindings) {
  for (const auto& [k, v] : bindings)
    if (!k.is_symbol()) throw std::invalid_argument("substitute: binding key must be a symbol");
  ExprMap memo;
  return substitute_impl(e, bindings, memo);
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

// a + max(sign(c), 0) * (b - a): a when c <= 0, b otherwise.
Expr select_leq(const Expr& c, const Expr& a, const Expr& b) {
  return make_add2(a, make_mul2(call2(FnKind::Max, call1(FnKind::Sign, c), Expr(0)),
                                make_add2(b, make_mul2(Expr(-1), a))));
}

Expr diff_impl(const Expr& e, const Expr& s, ExprMap& memo) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return Expr(0);
    case ExprKind::Symbol:
      return e == s ? Expr(1) : Expr(0);
    default:
      break;
  }
  if (auto hit = memo.find(e); hit != memo.end()) return hit->second;

  Expr result = Expr(0);
  switch (e.kind()) {
    case ExprKind::Add: {
      std::vector<Expr> terms;
      for (const Expr& k : e.children()) terms.push_back(diff_impl(k, s, memo));
      result = make_add(terms);
      break;
    }
    case ExprKind::Mul: {
      auto kids = e.children();
      std::vector<Expr> terms;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        const Expr di = diff_impl(kids[i], s, memo);
        if (di.is_zero()) continue;
        std::vector<Expr> factors;
        for (std::size_t j = 0; j < kids.size(); ++j)
          if (j != i) factors.push_back(kids[j]);
        factors.push_back(di);
        terms.push_back(make_mul(factors));
      }
      result = make_add(terms);
      break;
    }
    case ExprKind::Pow: {
      const Expr& b = e.base();
      const Expr& p = e.exponent();
      if (contains_symbol(p, s))
        throw std::invalid_argument("differentiate: exponent depends on the variable (no log primitive)");
      const Expr db = diff_impl(b, s, memo);
      // d/dx b^p = p * b^(p-1) * b'
      result = make_mul2(make_mul2(p, make_pow(b, make_add2(p, Expr(-1)))), db);
      break;
    }
    case ExprKind::Call: {
      auto args = e.children();
      const Expr& u = args[0];
      const Expr du = diff_impl(u, s, memo);
      switch (e.fn()) {
        case FnKind::Sin:
          result = make_mul2(call1(FnKind::Cos, u), du);
          break;
        case FnKind::Cos:
          result = make_mul2(Expr(-1), make_mul2(call1(FnKind::Sin, u), du));
          break;
        case FnKind::Tan: {
          const Expr t = call1(FnKind::Tan, u);
          result = make_mul2(make_add2(Expr(1), make_pow(t, Expr(2))), du);
          break;
        }
        case FnKind::Sqrt:
          result = make_mul2(make_mul2(Expr(Rational(1, 2)), make_pow(call1(FnKind::Sqrt, u), Expr(-1))), du);
          break;
        case FnKind::Abs:
          result = make_mul2(call1(FnKind::Sign, u), du);
          break;
        case FnKind::Sign:
          result = Expr(0);
          break;
        case FnKind::Min: {
          const Expr da = du, db_ = diff_impl(args[1], s, memo);
          result = select_leq(make_add2(u, make_mul2(Expr(-1), args[1])), da, db_);
          break;
        }
        case FnKind::Max: {
          const Expr da = du, db_ = diff_impl(args[1], s, memo);
          result = select_leq(make_add2(args[1], make_mul2(Expr(-1), u)), da, db_);
          break;
        }
        case FnKind::Atan2: {
          const Expr& y = args[0];
          const Expr& x = args[1];
          const Expr dy = du, dx = diff_impl(x, s, memo);
          const Expr denom = make_add2(make_pow(x, Expr(2)), make_pow(y, Expr(2)));
          result = make_mul2(make_add2(make_mul2(x, dy), make_mul2(Expr(-1), make_mul2(y, dx))),
                             make_pow(denom, Expr(-1)));
          break;
        }
      }
      break;
    }
    default:
      break;
  }
  memo.emplace(e, result);
  return result;
}

}  // namespace

Expr differentiate(const Expr& e, const Expr& symbol) {
  if (!symbol.is_symbol()) throw std::invalid_argument("differentiate: not a symbol");
  ExprMap memo;
  return diff_impl(e, symbol, memo);
}

// ---------------------------------------------------------------------------
// Numeric evaluation

namespace {

double eval_impl(const Expr& e, const Bindings& bindings,
                 std::unordered_map<const ExprNode*, double>& memo) {
  switch (e.kind()) {
    case ExprKind::Constant:
      return e.constant_as_double();
    default:
      break;
  }
  if (auto hit = memo.find(e.node()); hit != memo.end()) return hit->second;
  double result = 0.0;
  switch (e.kind()) {
    case ExprKind::Symbol: {
      auto it = bindings.find(e.name());
      if (it == bindings.end()) throw MissingBindingError(e.name());
      result = it->second;
      break;
    }
    case ExprKind::Add: {
      double acc = 0.0;
      for (const Expr& k : e.children()) acc += eval_impl(k, bindings, memo);
      result = acc;
      break;
    }
    case ExprKind::Mul: {
      double acc = 1.0;
      for (const Expr& k : e.children()) acc *= eval_impl(k, bindings, memo);
      result = acc;
      break;
    }
    case ExprKind::Pow:
      result = scalar_ops::eval_pow(eval_impl(e.base(), bindings, memo),
                                    eval_impl(e.exponent(), bindings, memo));
      break;
    case ExprKind::Call: {
      auto args = e.children();
      if (args.size() == 1) {
        result = scalar_ops::eval_unary(e.fn(), eval_impl(args[0], bindings, memo));
      } else {
        result = scalar_ops::eval_binary(e.fn(), eval_impl(args[0], bindings, memo),
                                         eval_impl(args[1], bindings, memo));
      }
      break;
    }
    default:
      break;
  }
  memo.emplace(e.node(), result);
  return result;
}

}  // namespace

double evaluate(const Expr& e, const Bindings& bindings) {
  std::unordered_map<const ExprNode*, double> memo;
  return eval_impl(e, bindings, memo);
}

// ---------------------------------------------------------------------------
// Operation counting

namespace {

std::int64_t own_cost(const Expr& e) {
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Symbol:
      return 0;
    case ExprKind::Add:
      return static_cast<std::int64_t>(e.children().size()) - 1;
    case ExprKind::Mul: {
      const auto kids = e.children();
      std::int64_t n = static_cast<std::int64_t>(kids.size()) - 1;
      // A pure negation wrapper is a sign, not an arithmetic op, for the
      // purposes of CSE extraction; count_tree charges it in context.
      if (kids.size() == 2 && kids[0].is_rational_constant() &&
          kids[0].rational_value() == Rational(-1))
        n -= 1;
      return n;
    }
    case ExprKind::Pow: {
      const Expr& p = e.exponent();
      if (p.is_rational_constant() && p.rational_value().is_integer()) {
        const std::int64_t n = p.rational_value().num();
        if (n == 1 || n == -1) return 0;
      }
      return 1;
    }
    case ExprKind::Call:
      return 1;
  }
  return 0;
}

bool is_negation_mul(const Expr& e) {
  return e.kind() == ExprKind::Mul && e.children()[0].is_rational_constant() &&
         e.children()[0].rational_value() == Rational(-1);
}

// Tree count with subtraction fusion: inside a sum the sign of a negated
// term folds into the add/sub, so a - b costs 1; a standalone -x*y costs its
// full n-1 (the sign is a real negation there).
std::int64_t count_tree(const Expr& e, std::unordered_map<const ExprNode*, std::int64_t>& memo) {
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Symbol:
      return 0;
    default:
      break;
  }
  if (auto hit = memo.find(e.node()); hit != memo.end()) return hit->second;
  std::int64_t total = 0;
  if (e.kind() == ExprKind::Add) {
    auto kids = e.children();
    total = static_cast<std::int64_t>(kids.size()) - 1;
    bool all_negated = true;
    for (const Expr& k : kids) {
      const bool neg = is_negation_mul(k);
      all_negated = all_negated && neg;
      total += count_tree(k, memo) - (neg ? 1 : 0);
    }
    if (all_negated) total += 1;  // one sign survives: -a - b
  } else if (e.kind() == ExprKind::Mul) {
    // standalone products charge every slot, including a leading -1 (NEG)
    total = static_cast<std::int64_t>(e.children().size()) - 1;
    for (const Expr& k : e.children()) total += count_tree(k, memo);
  } else {
    total = own_cost(e);
    for (const Expr& k : e.children()) total += count_tree(k, memo);
  }
  memo.emplace(e.node(), total);
  return total;
}

void collect_cost(const Expr& e, std::unordered_set<const ExprNode*>& seen, std::int64_t& total) {
  if (!seen.insert(e.node()).second) return;
  total += own_cost(e);
  for (const Expr& k : e.children()) collect_cost(k, seen, total);
}

}  // namespace

std::int64_t count_ops(const Expr& e) {
  std::unordered_map<const ExprNode*, std::int64_t> memo;
  return count_tree(e, memo);
}

std::int64_t count_ops_unique(std::span<const Expr> exprs) {
  std::unordered_set<const ExprNode*> seen;
  std::int64_t total = 0;
  for (const Expr& e : exprs) collect_cost(e, seen, total);
  return total;
}

std::int64_t node_cost(const Expr& e) { return own_cost(e); }

// ---------------------------------------------------------------------------
// Expansion

namespace {

constexpr std::size_t kExpandTermLimit = 2000;

// Multiplies a term list by one factor, splicing sums produced by
// canonicalization back into the list.
bool expand_multiply(std::vector<Expr>& terms, const Expr& factor) {
  std::vector<Expr> next;
  auto push = [&next](const Expr& e) {
    if (e.kind() == ExprKind::Add) {
      auto kids = e.children();
      next.insert(next.end(), kids.begin(), kids.end());
    } else {
      next.push_back(e);
    }
  };
  if (factor.kind() == ExprKind::Add) {
    for (const Expr& t : terms)
      for (const Expr& s : factor.children()) push(make_mul2(t, s));
  } else {
    for (const Expr& t : terms) push(make_mul2(t, factor));
  }
  if (next.size() > kExpandTermLimit) return false;
  terms = std::move(next);
  return true;
}

Expr expand_impl(const Expr& e, ExprMap& memo) {
  switch (e.kind()) {
    case ExprKind::Constant:
    case ExprKind::Symbol:
      return e;
    default:
      break;
  }
  if (auto hit = memo.find(e); hit != memo.end()) return hit->second;

  std::vector<Expr> kids;
  kids.reserve(e.children().size());
  for (const Expr& k : e.children()) kids.push_back(expand_impl(k, memo));

  Expr result = e;
  switch (e.kind()) {
    case ExprKind::Add:
      result = make_add(kids);
      break;
    case ExprKind::Mul: {
      std::vector<Expr> terms = {intern_constant(Rational(1))};
      bool ok = true;
      for (const Expr& k : kids)
        if (!expand_multiply(terms, k)) {
          ok = false;
          break;
        }
      result = ok ? make_add(terms) : make_mul(kids);
      break;
    }
    case ExprKind::Pow: {
      const Expr& p = kids[1];
      if (kids[0].kind() == ExprKind::Add && p.is_rational_constant() &&
          p.rational_value().is_integer() && p.rational_value().num() >= 2 &&
          p.rational_value().num() <= 8) {
        std::vector<Expr> terms = {intern_constant(Rational(1))};
        bool ok = true;
        for (std::int64_t i = 0; i < p.rational_value().num(); ++i)
          if (!expand_multiply(terms, kids[0])) {
            ok = false;
            break;
          }
        result = ok ? make_add(terms) : make_pow(kids[0], kids[1]);
      } else {
        result = make_pow(kids[0], kids[1]);
      }
      break;
    }
    case ExprKind::Call:
      result = make_call(e.fn(), kids);
      break;
    default:
      break;
  }
  memo.emplace(e, result);
  return result;
}

}  // namespace

Expr expand(const Expr& e) {
  ExprMap memo;
  return expand_impl(e, memo);
}

// ---------------------------------------------------------------------------
// Free symbols

namespace {

void free_symbols_impl(const Expr& e, std::unordered_set<const ExprNode*>& seen,
                       std::vector<Expr>& out) {
  if (!seen.insert(e.node()).second) return;
  if (e.is_symbol()) {
    out.push_back(e);
    return;
  }
  for (const Expr& k : e.children()) free_symbols_impl(k, seen, out);
}

}  // namespace

std::vector<Expr> free_symbols(const Expr& e) {
  const Expr one[1] = {e};
  return free_symbols(one);
}

std::vector<Expr> free_symbols(std::span<const Expr> exprs) {
  std::unordered_set<const ExprNode*> seen;
  std::vector<Expr> out;
  for (const Expr& e : exprs) free_symbols_impl(e, seen, out);
  std::sort(out.begin(), out.end(),
            [](const Expr& a, const Expr& b) { return a.name() < b.name(); });
  return out;
}

bool contains_symbol(const Expr& e, const Expr& symbol) {
  if (e == symbol) return true;
  for (const Expr& k : e.children())
    if (contains_symbol(k, symbol)) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Precedence levels: Add 1, Mul 2, unary minus 2, Pow 3, atoms 4.
void render(const Expr& e, int parent_prec, std::string& out);

void render_constant(const Expr& e, int parent_prec, std::string& out) {
  std::string s;
  bool neg = false;
  if (e.is_rational_constant()) {
    const Rational& r = e.rational_value();
    neg = r.is_negative();
    s = to_string(r.abs());
    if (!r.is_integer() && parent_prec >= 2) s = "(" + s + ")";
  } else {
    double v = e.float_value();
    neg = std::signbit(v) && !std::isnan(v);
    s = format_double(neg ? -v : v);
  }
  if (neg) {
    if (parent_prec >= 2)
      out += "(-" + s + ")";
    else
      out += "-" + s;
  } else {
    out += s;
  }
}

bool is_negated_term(const Expr& e) {
  if (e.is_constant())
    return e.is_rational_constant() ? e.rational_value().is_negative()
                                    : (std::signbit(e.float_value()) && !std::isnan(e.float_value()));
  if (e.kind() != ExprKind::Mul) return false;
  const Expr& head = e.children()[0];
  return head.is_rational_constant() && head.rational_value().is_negative();
}

Expr negate_for_print(const Expr& e) { return -e; }

void render_mul(const Expr& e, int parent_prec, std::string& out) {
  auto kids = e.children();
  std::vector<Expr> num, den;
  bool neg = false;
  std::size_t start = 0;
  if (kids[0].is_rational_constant()) {
    Rational c = kids[0].rational_value();
    if (c.is_negative()) {
      neg = true;
      c = c.negated();
    }
    if (!c.is_one()) num.push_back(Expr(c));
    start = 1;
  }
  for (std::size_t i = start; i < kids.size(); ++i) {
    const Expr& k = kids[i];
    if (k.kind() == ExprKind::Pow && k.exponent().is_rational_constant() &&
        k.exponent().rational_value().is_negative()) {
      den.push_back(make_pow(k.base(), Expr(k.exponent().rational_value().negated())));
    } else {
      num.push_back(k);
    }
  }
  std::string body;
  if (num.empty()) body = "1";
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (i) body += "*";
    render(num[i], 2, body);
  }
  if (!den.empty()) {
    body += "/";
    if (den.size() > 1) body += "(";
    for (std::size_t i = 0; i < den.size(); ++i) {
      if (i) body += "*";
      render(den[i], 3, body);
    }
    if (den.size() > 1) body += ")";
  }
  const int prec = neg ? 1 : 2;
  if (parent_prec > prec) out += "(";
  if (neg) out += "-";
  out += body;
  if (parent_prec > prec) out += ")";
}

void render(const Expr& e, int parent_prec, std::string& out) {
  switch (e.kind()) {
    case ExprKind::Constant:
      render_constant(e, parent_prec, out);
      break;
    case ExprKind::Symbol:
      out += e.name();
      break;
    case ExprKind::Add: {
      std::string body;
      auto kids = e.children();
      for (std::size_t i = 0; i < kids.size(); ++i) {
        if (i && is_negated_term(kids[i])) {
          body += " - ";
          render(negate_for_print(kids[i]), 1, body);
        } else {
          if (i) body += " + ";
          render(kids[i], 1, body);
        }
      }
      if (parent_prec > 1) out += "(" + body + ")";
      else out += body;
      break;
    }
    case ExprKind::Mul:
      render_mul(e, parent_prec, out);
      break;
    case ExprKind::Pow: {
      std::string body;
      render(e.base(), 4, body);
      body += "**";
      render(e.exponent(), 4, body);
      if (parent_prec > 3) out += "(" + body + ")";
      else out += body;
      break;
    }
    case ExprKind::Call: {
      out += std::string(fn_name(e.fn())) + "(";
      auto args = e.children();
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ", ";
        render(args[i], 0, out);
      }
      out += ")";
      break;
    }
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  render(e, 0, out);
  return out;
}

std::ostream& operator<<(std::ostream& os, const Expr& e) { return os << to_string(e); }

}  // namespace symk
