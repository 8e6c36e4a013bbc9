#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "symk/expr.hpp"

namespace symk {

struct Shape {
  enum class Kind { Scalar, Matrix, Geometry };

  Kind kind = Kind::Scalar;
  int rows = 1;
  int cols = 1;
  int storage = 1;

  static Shape scalar() { return {}; }
  static Shape matrix(int rows, int cols) { return {Kind::Matrix, rows, cols, rows * cols}; }
  static Shape vector(int rows) { return matrix(rows, 1); }
  static Shape geometry(int storage_dim) { return {Kind::Geometry, storage_dim, 1, storage_dim}; }

  int slot_count() const { return kind == Kind::Matrix ? rows * cols : storage; }
  std::string describe() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.kind == b.kind && a.rows == b.rows && a.cols == b.cols && a.storage == b.storage;
  }
};

struct Arg {
  std::string name;
  Shape shape;
};

struct KernelSignature {
  std::string name;
  std::vector<Arg> inputs;
  std::vector<Arg> outputs;
};

// Storage-slot symbols for one argument: a scalar argument is the bare
// symbol `name`; anything wider uses `name[i]` with matrices flattened
// row-major.
std::vector<Expr> slot_symbols(const std::string& name, const Shape& shape);
std::vector<Expr> input_slot_symbols(const KernelSignature& sig);

class SignatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CseResult {
  std::vector<std::pair<Expr, Expr>> temps;  // (temp symbol, rhs)
  std::vector<Expr> outputs;
};

// Pulls every DAG node with at least two uses across the outputs and
// per-node cost >= 1 into a temp, in dependency order; single-use nodes
// stay inline. Never increases the per-occurrence op count.
CseResult eliminate(std::span<const Expr> outputs);

enum class OpCode : std::uint8_t {
  LoadConst,
  Add,
  Mul,
  Pow,   // general exponent from a register
  Powi,  // integer exponent in the immediate
  Sin,
  Cos,
  Tan,
  Sqrt,
  Abs,
  Sign,
  Min,
  Max,
  Atan2,
};

struct Instr {
  OpCode op;
  std::int32_t a = -1;
  std::int32_t b = -1;
  double imm = 0.0;
};

struct ExecBuffer {
  std::vector<double> regs;
};

// A flat, branchless, topologically ordered kernel: temp definitions in
// dependency order followed by output expressions over inputs and temps.
class InstructionProgram {
 public:
  KernelSignature signature;
  std::vector<std::pair<Expr, Expr>> temps;
  std::vector<Expr> outputs;
  std::int64_t op_count = 0;

  int input_slot_count() const { return n_inputs_; }
  int output_slot_count() const { return static_cast<int>(output_regs_.size()); }
  int register_count() const { return n_inputs_ + static_cast<int>(instrs_.size()); }
  const std::vector<Instr>& instructions() const { return instrs_; }

  // Flat offset of each output argument in the output vector.
  int output_offset(int output_index) const;

  void execute(std::span<const double> inputs, std::span<double> out, ExecBuffer& buf) const;
  std::vector<double> execute(std::span<const double> inputs) const;

 private:
  friend InstructionProgram compile(const KernelSignature&, std::span<const Expr>);
  std::vector<Instr> instrs_;
  std::vector<std::int32_t> output_regs_;
  int n_inputs_ = 0;
};

// Runs eliminate over the flattened outputs and lowers the result to an
// executable program. Pure: identical inputs give identical programs.
InstructionProgram compile(const KernelSignature& sig, std::span<const Expr> outputs);

enum class SourceDialect { CLike, Pseudocode };

// Renders the program as a single readable function; byte-stable for
// identical programs.
std::string render_source(const InstructionProgram& p, SourceDialect dialect = SourceDialect::CLike);

}  // namespace symk
