#include "symk/cse.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "symk/scalar_ops.hpp"

namespace symk {

std::string Shape::describe() const {
  switch (kind) {
    case Kind::Scalar: return "scalar";
    case Kind::Matrix:
      return cols == 1 ? "vector(" + std::to_string(rows) + ")"
                       : "matrix(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
    case Kind::Geometry: return "geometry[" + std::to_string(storage) + "]";
  }
  return "?";
}

std::vector<Expr> slot_symbols(const std::string& name, const Shape& shape) {
  if (shape.kind == Shape::Kind::Scalar) return {Expr::symbol(name)};
  std::vector<Expr> out;
  out.reserve(shape.slot_count());
  for (int i = 0; i < shape.slot_count(); ++i)
    out.push_back(Expr::symbol(name + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<Expr> input_slot_symbols(const KernelSignature& sig) {
  std::vector<Expr> out;
  for (const Arg& a : sig.inputs) {
    auto slots = slot_symbols(a.name, a.shape);
    out.insert(out.end(), slots.begin(), slots.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Common subexpression elimination

namespace {

void count_uses(const Expr& e, std::unordered_map<const ExprNode*, int>& uses,
                std::vector<Expr>& postorder) {
  auto& n = uses[e.node()];
  ++n;
  if (n > 1) return;  // children already counted on the first visit
  for (const Expr& k : e.children()) count_uses(k, uses, postorder);
  postorder.push_back(e);
}

}  // namespace

namespace {

// Sums and products are grouped with their negations (a - b alongside b - a,
// -2*x*y alongside 2*x*y) so one temp serves both; the sign folds into the
// surrounding add/sub. The representative of a sign group is the smaller of
// the pair in the canonical order.
bool sign_groupable(const Expr& e) {
  return e.kind() == ExprKind::Add || e.kind() == ExprKind::Mul;
}

Expr sign_representative(const Expr& e) {
  const Expr neg = -e;
  return structural_less(neg, e) ? neg : e;
}

}  // namespace

CseResult eliminate(std::span<const Expr> outputs) {
  std::unordered_map<const ExprNode*, int> uses;
  std::vector<Expr> postorder;  // children before parents, by first visit
  for (const Expr& e : outputs) count_uses(e, uses, postorder);

  // Occurrence counts in the final forest: a node that stays inline repeats
  // once per occurrence of its parent, so counts propagate top-down through
  // zero-cost wrappers (e.g. 1/x shared by two parents still duplicates x).
  std::unordered_map<const ExprNode*, std::int64_t> occ;
  for (const Expr& e : outputs) occ[e.node()] += 1;
  for (auto it = postorder.rbegin(); it != postorder.rend(); ++it) {  // parents first
    const Expr& e = *it;
    const std::int64_t n = occ[e.node()];
    const std::int64_t contribution = (n >= 2 && node_cost(e) >= 1) ? 1 : n;
    for (const Expr& k : e.children()) occ[k.node()] += contribution;
  }

  // Occurrences pooled per sign group decide extraction.
  std::unordered_map<const ExprNode*, Expr> rep_of;
  std::unordered_map<const ExprNode*, std::int64_t> group_occ;
  for (const Expr& e : postorder) {
    if (node_cost(e) < 1) continue;
    const Expr rep = sign_groupable(e) ? sign_representative(e) : e;
    rep_of.emplace(e.node(), rep);
    group_occ[rep.node()] += occ[e.node()];
  }

  CseResult result;
  ExprMap rewritten;                                 // original node -> expr over temps
  std::unordered_map<const ExprNode*, Expr> temp_of; // group representative -> temp symbol
  int next_temp = 0;

  for (const Expr& e : postorder) {
    Expr body = e;
    if (!e.is_constant() && !e.is_symbol()) {
      std::vector<Expr> kids;
      kids.reserve(e.children().size());
      bool changed = false;
      for (const Expr& k : e.children()) {
        kids.push_back(rewritten.at(k));
        changed = changed || kids.back() != k;
      }
      if (changed) {
        switch (e.kind()) {
          case ExprKind::Add: body = Expr::add(kids); break;
          case ExprKind::Mul: body = Expr::mul(kids); break;
          case ExprKind::Pow: body = Expr::pow(kids[0], kids[1]); break;
          case ExprKind::Call: body = Expr::call(e.fn(), kids); break;
          default: break;
        }
      }
    }

    const auto rep_it = rep_of.find(e.node());
    if (rep_it != rep_of.end() && group_occ.at(rep_it->second.node()) >= 2) {
      const Expr& rep = rep_it->second;
      const bool is_rep = rep == e;
      auto sym_it = temp_of.find(rep.node());
      if (sym_it == temp_of.end()) {
        const Expr sym = Expr::symbol("_tmp" + std::to_string(next_temp++));
        result.temps.emplace_back(sym, is_rep ? body : -body);
        sym_it = temp_of.emplace(rep.node(), sym).first;
      }
      rewritten.emplace(e, is_rep ? sym_it->second : -sym_it->second);
    } else {
      rewritten.emplace(e, body);
    }
  }

  result.outputs.reserve(outputs.size());
  for (const Expr& e : outputs) result.outputs.push_back(rewritten.at(e));
  return result;
}

// ---------------------------------------------------------------------------
// Lowering and execution

namespace {

class Lowerer {
 public:
  Lowerer(std::vector<Instr>& instrs, int n_inputs) : instrs_(instrs), next_reg_(n_inputs) {}

  void bind(const Expr& symbol, std::int32_t reg) { reg_of_[symbol.node()] = reg; }

  std::int32_t lower(const Expr& e) {
    if (auto it = reg_of_.find(e.node()); it != reg_of_.end()) return it->second;
    std::int32_t reg = -1;
    switch (e.kind()) {
      case ExprKind::Symbol:
        throw SignatureError("expression references symbol '" + e.name() +
                             "' which is not covered by the signature inputs");
      case ExprKind::Constant:
        reg = emit({OpCode::LoadConst, -1, -1, e.constant_as_double()});
        break;
      case ExprKind::Add:
      case ExprKind::Mul: {
        const OpCode op = e.kind() == ExprKind::Add ? OpCode::Add : OpCode::Mul;
        auto kids = e.children();
        std::int32_t acc = lower(kids[0]);
        for (std::size_t i = 1; i < kids.size(); ++i) {
          const std::int32_t rhs = lower(kids[i]);
          acc = emit({op, acc, rhs});
        }
        reg = acc;
        break;
      }
      case ExprKind::Pow: {
        const Expr& p = e.exponent();
        if (p.is_rational_constant() && p.rational_value().is_integer() &&
            std::llabs(p.rational_value().num()) <= 512) {
          const std::int32_t base = lower(e.base());
          reg = emit({OpCode::Powi, base, -1, static_cast<double>(p.rational_value().num())});
        } else {
          const std::int32_t base = lower(e.base());
          const std::int32_t exp = lower(p);
          reg = emit({OpCode::Pow, base, exp});
        }
        break;
      }
      case ExprKind::Call: {
        auto args = e.children();
        OpCode op = OpCode::Sin;
        switch (e.fn()) {
          case FnKind::Sin: op = OpCode::Sin; break;
          case FnKind::Cos: op = OpCode::Cos; break;
          case FnKind::Tan: op = OpCode::Tan; break;
          case FnKind::Sqrt: op = OpCode::Sqrt; break;
          case FnKind::Abs: op = OpCode::Abs; break;
          case FnKind::Sign: op = OpCode::Sign; break;
          case FnKind::Min: op = OpCode::Min; break;
          case FnKind::Max: op = OpCode::Max; break;
          case FnKind::Atan2: op = OpCode::Atan2; break;
        }
        const std::int32_t a = lower(args[0]);
        const std::int32_t b = args.size() > 1 ? lower(args[1]) : -1;
        reg = emit({op, a, b});
        break;
      }
    }
    reg_of_[e.node()] = reg;
    return reg;
  }

 private:
  std::int32_t emit(Instr instr) {
    instrs_.push_back(instr);
    return next_reg_++;
  }

  std::vector<Instr>& instrs_;
  std::unordered_map<const ExprNode*, std::int32_t> reg_of_;
  std::int32_t next_reg_;
};

}  // namespace

InstructionProgram compile(const KernelSignature& sig, std::span<const Expr> outputs) {
  InstructionProgram p;
  p.signature = sig;

  {
    std::unordered_set<std::string> names;
    for (const Arg& a : sig.inputs) {
      if (!names.insert(a.name).second) throw SignatureError("duplicate input name '" + a.name + "'");
      if (a.name.rfind("_tmp", 0) == 0)
        throw SignatureError("input name '" + a.name + "' uses the reserved _tmp prefix");
    }
  }

  int out_slots = 0;
  for (const Arg& a : sig.outputs) out_slots += a.shape.slot_count();
  if (out_slots != static_cast<int>(outputs.size()))
    throw SignatureError("signature declares " + std::to_string(out_slots) + " output slots but " +
                         std::to_string(outputs.size()) + " output expressions were given");

  const std::vector<Expr> inputs = input_slot_symbols(sig);
  {
    std::unordered_set<const ExprNode*> declared;
    for (const Expr& s : inputs) declared.insert(s.node());
    for (const Expr& s : free_symbols(outputs))
      if (!declared.count(s.node()))
        throw SignatureError("output expression references symbol '" + s.name() +
                             "' which is not covered by the signature inputs");
  }

  CseResult cse = eliminate(outputs);
  p.temps = cse.temps;
  p.outputs = cse.outputs;
  p.op_count = 0;
  for (const auto& [sym, rhs] : p.temps) p.op_count += count_ops(rhs);
  for (const Expr& e : p.outputs) p.op_count += count_ops(e);

  p.n_inputs_ = static_cast<int>(inputs.size());
  Lowerer lower(p.instrs_, p.n_inputs_);
  for (std::size_t i = 0; i < inputs.size(); ++i) lower.bind(inputs[i], static_cast<std::int32_t>(i));
  for (const auto& [sym, rhs] : p.temps) {
    const std::int32_t reg = lower.lower(rhs);
    lower.bind(sym, reg);
  }
  p.output_regs_.reserve(p.outputs.size());
  for (const Expr& e : p.outputs) p.output_regs_.push_back(lower.lower(e));
  return p;
}

int InstructionProgram::output_offset(int output_index) const {
  int off = 0;
  for (int i = 0; i < output_index; ++i) off += signature.outputs[i].shape.slot_count();
  return off;
}

void InstructionProgram::execute(std::span<const double> inputs, std::span<double> out,
                                 ExecBuffer& buf) const {
  if (static_cast<int>(inputs.size()) != n_inputs_)
    throw std::invalid_argument("execute: expected " + std::to_string(n_inputs_) +
                                " input values, got " + std::to_string(inputs.size()));
  if (out.size() != output_regs_.size())
    throw std::invalid_argument("execute: expected " + std::to_string(output_regs_.size()) +
                                " output slots, got " + std::to_string(out.size()));
  buf.regs.resize(register_count());
  double* regs = buf.regs.data();
  std::copy(inputs.begin(), inputs.end(), regs);
  std::int32_t dst = n_inputs_;
  for (const Instr& ins : instrs_) {
    double v;
    switch (ins.op) {
      case OpCode::LoadConst: v = ins.imm; break;
      case OpCode::Add: v = regs[ins.a] + regs[ins.b]; break;
      case OpCode::Mul: v = regs[ins.a] * regs[ins.b]; break;
      case OpCode::Pow: v = scalar_ops::eval_pow(regs[ins.a], regs[ins.b]); break;
      case OpCode::Powi: v = scalar_ops::eval_pow(regs[ins.a], ins.imm); break;
      case OpCode::Sin: v = std::sin(regs[ins.a]); break;
      case OpCode::Cos: v = std::cos(regs[ins.a]); break;
      case OpCode::Tan: v = std::tan(regs[ins.a]); break;
      case OpCode::Sqrt: v = scalar_ops::eval_unary(FnKind::Sqrt, regs[ins.a]); break;
      case OpCode::Abs: v = std::fabs(regs[ins.a]); break;
      case OpCode::Sign: v = scalar_ops::sign_value(regs[ins.a]); break;
      case OpCode::Min: v = std::fmin(regs[ins.a], regs[ins.b]); break;
      case OpCode::Max: v = std::fmax(regs[ins.a], regs[ins.b]); break;
      case OpCode::Atan2: v = std::atan2(regs[ins.a], regs[ins.b]); break;
      default: v = 0; break;
    }
    regs[dst++] = v;
  }
  for (std::size_t i = 0; i < output_regs_.size(); ++i) out[i] = regs[output_regs_[i]];
}

std::vector<double> InstructionProgram::execute(std::span<const double> inputs) const {
  ExecBuffer buf;
  std::vector<double> out(output_regs_.size());
  execute(inputs, out, buf);
  return out;
}

// ---------------------------------------------------------------------------
// Source rendering

namespace {

std::string format_imm(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void render_c(const Expr& e, int parent_prec, std::string& out);

bool is_neg_term(const Expr& e) {
  if (e.is_rational_constant()) return e.rational_value().is_negative();
  if (e.is_float_constant()) return std::signbit(e.float_value()) && !std::isnan(e.float_value());
  if (e.kind() != ExprKind::Mul) return false;
  const Expr& head = e.children()[0];
  return head.is_rational_constant() && head.rational_value().is_negative();
}

void render_c_mul(const Expr& e, int parent_prec, std::string& out) {
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
      den.push_back(pow(k.base(), Expr(k.exponent().rational_value().negated())));
    } else {
      num.push_back(k);
    }
  }
  std::string body;
  if (num.empty()) body = "Scalar(1)";
  for (std::size_t i = 0; i < num.size(); ++i) {
    if (i) body += " * ";
    render_c(num[i], 2, body);
  }
  if (!den.empty()) {
    body += " / ";
    if (den.size() > 1) body += "(";
    for (std::size_t i = 0; i < den.size(); ++i) {
      if (i) body += " * ";
      render_c(den[i], 3, body);
    }
    if (den.size() > 1) body += ")";
  }
  const int prec = neg ? 1 : 2;
  if (parent_prec > prec) out += "(";
  if (neg) out += "-";
  out += body;
  if (parent_prec > prec) out += ")";
}

void render_c(const Expr& e, int parent_prec, std::string& out) {
  switch (e.kind()) {
    case ExprKind::Constant: {
      std::string s;
      bool neg = false;
      if (e.is_rational_constant()) {
        const Rational& r = e.rational_value();
        neg = r.is_negative();
        const Rational a = r.abs();
        s = r.is_integer()
                ? "Scalar(" + std::to_string(a.num()) + ")"
                : "Scalar(" + std::to_string(a.num()) + ") / Scalar(" + std::to_string(a.den()) + ")";
      } else {
        const double v = e.float_value();
        neg = std::signbit(v) && !std::isnan(v);
        s = "Scalar(" + format_imm(neg ? -v : v) + ")";
      }
      if (neg && parent_prec >= 2) out += "(-" + s + ")";
      else if (neg) out += "-" + s;
      else out += s;
      break;
    }
    case ExprKind::Symbol:
      out += e.name();
      break;
    case ExprKind::Add: {
      std::string body;
      auto kids = e.children();
      for (std::size_t i = 0; i < kids.size(); ++i) {
        if (i && is_neg_term(kids[i])) {
          body += " - ";
          render_c(-kids[i], 1, body);
        } else {
          if (i) body += " + ";
          render_c(kids[i], 1, body);
        }
      }
      if (parent_prec > 1) out += "(" + body + ")";
      else out += body;
      break;
    }
    case ExprKind::Mul:
      render_c_mul(e, parent_prec, out);
      break;
    case ExprKind::Pow:
      out += "std::pow(";
      render_c(e.base(), 0, out);
      out += ", ";
      render_c(e.exponent(), 0, out);
      out += ")";
      break;
    case ExprKind::Call: {
      static const char* names[] = {"std::sin",  "std::cos",  "std::tan",
                                    "std::sqrt", "std::abs",  "sign",
                                    "std::fmin", "std::fmax", "std::atan2"};
      out += names[static_cast<int>(e.fn())];
      out += "(";
      auto args = e.children();
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ", ";
        render_c(args[i], 0, out);
      }
      out += ")";
      break;
    }
  }
}

std::string c_expr(const Expr& e) {
  std::string s;
  render_c(e, 0, s);
  return s;
}

std::string render_c_like(const InstructionProgram& p) {
  const KernelSignature& sig = p.signature;
  std::string out;
  out += "// Function: " + sig.name + "\n";
  out += "// Total ops: " + std::to_string(p.op_count) + "\n";
  for (const Arg& a : sig.inputs) out += "//   input  " + a.name + ": " + a.shape.describe() + "\n";
  for (const Arg& a : sig.outputs) out += "//   output " + a.name + ": " + a.shape.describe() + "\n";
  out += "template <typename Scalar>\n";
  out += "void " + sig.name + "(";
  bool first = true;
  for (const Arg& a : sig.inputs) {
    if (!first) out += ", ";
    first = false;
    if (a.shape.kind == Shape::Kind::Scalar)
      out += "const Scalar " + a.name;
    else
      out += "const Scalar* const " + a.name;
  }
  for (const Arg& a : sig.outputs) {
    if (!first) out += ", ";
    first = false;
    out += "Scalar* const " + a.name;
  }
  out += ") {\n";
  if (!p.temps.empty()) {
    out += "  // Common subexpressions (" + std::to_string(p.temps.size()) + ")\n";
    for (const auto& [sym, rhs] : p.temps)
      out += "  const Scalar " + sym.name() + " = " + c_expr(rhs) + ";\n";
    out += "\n";
  }
  int slot = 0;
  for (const Arg& a : sig.outputs) {
    for (int i = 0; i < a.shape.slot_count(); ++i, ++slot)
      out += "  " + a.name + "[" + std::to_string(i) + "] = " + c_expr(p.outputs[slot]) + ";\n";
  }
  out += "}\n";
  return out;
}

std::string render_pseudocode(const InstructionProgram& p) {
  const KernelSignature& sig = p.signature;
  std::string out = "func " + sig.name + "(";
  bool first = true;
  for (const Arg& a : sig.inputs) {
    if (!first) out += ", ";
    first = false;
    out += a.name + ": " + a.shape.describe();
  }
  out += ") -> (";
  first = true;
  for (const Arg& a : sig.outputs) {
    if (!first) out += ", ";
    first = false;
    out += a.name + ": " + a.shape.describe();
  }
  out += ")\n";
  out += "  # total ops: " + std::to_string(p.op_count) + "\n";
  for (const auto& [sym, rhs] : p.temps) out += "  " + sym.name() + " = " + to_string(rhs) + "\n";
  int slot = 0;
  for (const Arg& a : sig.outputs) {
    for (int i = 0; i < a.shape.slot_count(); ++i, ++slot)
      out += "  " + a.name + "[" + std::to_string(i) + "] = " + to_string(p.outputs[slot]) + "\n";
  }
  return out;
}

}  // namespace

std::string render_source(const InstructionProgram& p, SourceDialect dialect) {
  return dialect == SourceDialect::CLike ? render_c_like(p) : render_pseudocode(p);
}

}  // namespace symk
