#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "symk/cse.hpp"
#include "symk/geometry.hpp"

namespace symk {

enum class ArgKind { Scalar, Vector, Rot3Arg, Pose3Arg };

struct ArgSpec {
  std::string name;
  ArgKind kind = ArgKind::Scalar;
  int dim = 1;  // vector length when kind == Vector

  Shape shape() const;
  int storage_dim() const { return shape().slot_count(); }
  int tangent_dim() const;
};

using ArgValue = std::variant<Expr, SymVector, Rot3<Expr>, Pose3<Expr>>;

// Pure function from symbolic group/vector/scalar arguments to an R^n
// residual; the output expressions depend only on the input storage symbols.
class SymbolicFunction {
 public:
  using Body = std::function<SymVector(const std::vector<ArgValue>&)>;

  SymbolicFunction(std::string name, std::vector<ArgSpec> args, Body body);

  const std::string& name() const { return name_; }
  const std::vector<ArgSpec>& args() const { return args_; }
  int arg_index(const std::string& name) const;

  // Arguments instantiated over the storage slot symbols `name[i]` / `name`.
  const std::vector<ArgValue>& symbolic_args() const;
  // Memoized body applied to the symbolic arguments.
  const SymVector& output() const;

  KernelSignature value_signature() const;

 private:
  std::string name_;
  std::vector<ArgSpec> args_;
  Body body_;
  mutable std::optional<std::vector<ArgValue>> symbolic_args_;
  mutable std::optional<SymVector> output_;
};

ArgValue symbolic_argument(const ArgSpec& spec);
std::vector<Expr> argument_storage(const ArgValue& v);
int argument_tangent_dim(const ArgValue& v);

// d S(g (+) v) / dv at v = 0. The epsilon inside exp is bound to the default
// numeric epsilon.
SymMatrix storage_D_tangent(const ArgValue& g);

// Left pseudo-inverse of storage_D_tangent under the unit-quaternion
// assumption (exact for on-manifold storage).
SymMatrix tangent_D_storage(const ArgValue& g);

// d f(S^-1(s))/ds multiplied symbolically by storage_D_tangent: the two
// factors fuse into one flattened expression.
SymMatrix jacobian_chain_rule(const SymbolicFunction& f, int arg_index);

// Substitutes S(g) + storage_D_tangent(g) * v for the storage of g, then
// differentiates with respect to v at v = 0. Numerically equal to the chain
// rule method everywhere; the default.
SymMatrix jacobian_first_order_retraction(const SymbolicFunction& f, int arg_index);

inline SymMatrix jacobian(const SymbolicFunction& f, int arg_index) {
  return jacobian_first_order_retraction(f, arg_index);
}

// Tangent-space Jacobian of a group-valued map, for benchmarking chained
// derivatives: tangent_D_storage(out) * dS_out/dS_in * storage_D_tangent(in).
SymMatrix tangent_jacobian_group_output(const ArgValue& input, const ArgValue& output);

// One program computing (residual b, jacobian J, hessian approx J^T J,
// rhs J^T b) with all subexpressions shared; J^T J and J^T b are formed
// symbolically, not at runtime. Kernel inputs are ordered optimized
// arguments first, remaining (constant) arguments after.
struct LinearizationKernel {
  InstructionProgram program;
  int residual_dim = 0;
  int tangent_dim = 0;
  std::vector<int> optimized_args;       // indices into the function's args
  std::vector<int> arg_tangent_dims;     // per optimized arg
  std::vector<int> arg_tangent_offsets;  // column offsets in J

  int res_offset() const { return 0; }
  int jac_offset() const { return residual_dim; }
  int hess_offset() const { return residual_dim + residual_dim * tangent_dim; }
  int rhs_offset() const { return hess_offset() + tangent_dim * tangent_dim; }
};

LinearizationKernel generate_linearization(const SymbolicFunction& f,
                                           const std::vector<int>& optimized_args);

}  // namespace symk
