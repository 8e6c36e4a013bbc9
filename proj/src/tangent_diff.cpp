#include "symk/tangent_diff.hpp"

#include <stdexcept>

namespace symk {

Shape ArgSpec::shape() const {
  switch (kind) {
    case ArgKind::Scalar: return Shape::scalar();
    case ArgKind::Vector: return Shape::vector(dim);
    case ArgKind::Rot3Arg: return Shape::geometry(4);
    case ArgKind::Pose3Arg: return Shape::geometry(7);
  }
  return Shape::scalar();
}

int ArgSpec::tangent_dim() const {
  switch (kind) {
    case ArgKind::Scalar: return 1;
    case ArgKind::Vector: return dim;
    case ArgKind::Rot3Arg: return 3;
    case ArgKind::Pose3Arg: return 6;
  }
  return 1;
}

ArgValue symbolic_argument(const ArgSpec& spec) {
  const std::vector<Expr> slots = slot_symbols(spec.name, spec.shape());
  switch (spec.kind) {
    case ArgKind::Scalar:
      return slots[0];
    case ArgKind::Vector: {
      SymVector v(spec.dim);
      for (int i = 0; i < spec.dim; ++i) v[i] = slots[i];
      return v;
    }
    case ArgKind::Rot3Arg:
      return StorageOps<Rot3<Expr>>::from_storage(slots);
    case ArgKind::Pose3Arg:
      return StorageOps<Pose3<Expr>>::from_storage(slots);
  }
  return slots[0];
}

std::vector<Expr> argument_storage(const ArgValue& v) {
  return std::visit(
      [](const auto& g) -> std::vector<Expr> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Expr>) {
          return {g};
        } else if constexpr (std::is_same_v<T, SymVector>) {
          return std::vector<Expr>(g.data(), g.data() + g.size());
        } else {
          return StorageOps<T>::to_storage(g);
        }
      },
      v);
}

int argument_tangent_dim(const ArgValue& v) {
  return std::visit(
      [](const auto& g) -> int {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Expr>) {
          return 1;
        } else if constexpr (std::is_same_v<T, SymVector>) {
          return static_cast<int>(g.size());
        } else {
          return LieGroupOps<T>::tangent_dim();
        }
      },
      v);
}

SymbolicFunction::SymbolicFunction(std::string name, std::vector<ArgSpec> args, Body body)
    : name_(std::move(name)), args_(std::move(args)), body_(std::move(body)) {}

int SymbolicFunction::arg_index(const std::string& name) const {
  for (std::size_t i = 0; i < args_.size(); ++i)
    if (args_[i].name == name) return static_cast<int>(i);
  throw std::invalid_argument("no argument named '" + name + "' in " + name_);
}

const std::vector<ArgValue>& SymbolicFunction::symbolic_args() const {
  if (!symbolic_args_) {
    std::vector<ArgValue> vals;
    vals.reserve(args_.size());
    for (const ArgSpec& a : args_) vals.push_back(symbolic_argument(a));
    symbolic_args_ = std::move(vals);
  }
  return *symbolic_args_;
}

const SymVector& SymbolicFunction::output() const {
  if (!output_) {
    SymVector out = body_(symbolic_args());
    if (out.size() < 1) throw std::invalid_argument(name_ + ": residual must be a non-empty vector");
    output_ = std::move(out);
  }
  return *output_;
}

KernelSignature SymbolicFunction::value_signature() const {
  KernelSignature sig;
  sig.name = name_;
  for (const ArgSpec& a : args_) sig.inputs.push_back({a.name, a.shape()});
  sig.outputs.push_back({"res", Shape::vector(static_cast<int>(output().size()))});
  return sig;
}

// ---------------------------------------------------------------------------
// storage_D_tangent and its pseudo-inverse

namespace {

std::vector<Expr> delta_symbols(int n) {
  std::vector<Expr> v;
  v.reserve(n);
  for (int i = 0; i < n; ++i) v.push_back(Expr::symbol("_delta" + std::to_string(i)));
  return v;
}

template <typename G>
SymMatrix storage_D_tangent_group(const G& g) {
  const int sdim = StorageOps<G>::storage_dim();
  const int tdim = LieGroupOps<G>::tangent_dim();
  const std::vector<Expr> vsyms = delta_symbols(tdim);
  typename LieGroupOps<G>::Tangent v;
  for (int i = 0; i < tdim; ++i) v[i] = vsyms[i];
  const G perturbed = LieGroupOps<G>::retract(g, v, Expr(kDefaultEpsilon));
  const std::vector<Expr> storage = StorageOps<G>::to_storage(perturbed);

  ExprMap at_zero;
  for (const Expr& s : vsyms) at_zero.emplace(s, Expr(0));

  SymMatrix d(sdim, tdim);
  for (int i = 0; i < sdim; ++i)
    for (int j = 0; j < tdim; ++j)
      d(i, j) = substitute(differentiate(storage[i], vsyms[j]), at_zero);
  return d;
}

SymMatrix identity_matrix(int n) {
  SymMatrix m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = i == j ? Expr(1) : Expr(0);
  return m;
}

}  // namespace

SymMatrix storage_D_tangent(const ArgValue& g) {
  return std::visit(
      [](const auto& v) -> SymMatrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Expr>) {
          SymMatrix m(1, 1);
          m(0, 0) = Expr(1);
          return m;
        } else if constexpr (std::is_same_v<T, SymVector>) {
          return identity_matrix(static_cast<int>(v.size()));
        } else {
          return storage_D_tangent_group(v);
        }
      },
      g);
}

SymMatrix tangent_D_storage(const ArgValue& g) {
  return std::visit(
      [&](const auto& v) -> SymMatrix {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Expr>) {
          SymMatrix m(1, 1);
          m(0, 0) = Expr(1);
          return m;
        } else if constexpr (std::is_same_v<T, SymVector>) {
          return identity_matrix(static_cast<int>(v.size()));
        } else if constexpr (std::is_same_v<T, Rot3<Expr>>) {
          // storage_D_tangent has orthogonal columns of norm 1/2 for unit q,
          // so the left pseudo-inverse is 4 times its transpose.
          const SymMatrix d = storage_D_tangent(g);
          SymMatrix out(3, 4);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) out(i, j) = Expr(4) * d(j, i);
          return out;
        } else {
          // Pose3: block diag of the Rot3 pseudo-inverse and the identity
          // (the translation retracts by plain addition).
          const SymMatrix d = storage_D_tangent(g);
          SymMatrix out(6, 7);
          for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 7; ++j) out(i, j) = Expr(0);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) out(i, j) = Expr(4) * d(j, i);
          for (int i = 0; i < 3; ++i) out(3 + i, 4 + i) = Expr(1);
          return out;
        }
      },
      g);
}

// ---------------------------------------------------------------------------
// Tangent-space Jacobians

SymMatrix jacobian_chain_rule(const SymbolicFunction& f, int arg_index) {
  const SymVector& out = f.output();
  const ArgSpec& spec = f.args().at(arg_index);
  const std::vector<Expr> storage = slot_symbols(spec.name, spec.shape());
  const int n = static_cast<int>(out.size());
  const int sdim = static_cast<int>(storage.size());

  SymMatrix df_ds(n, sdim);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < sdim; ++k) df_ds(r, k) = differentiate(out[r], storage[k]);

  const SymMatrix d = storage_D_tangent(f.symbolic_args().at(arg_index));
  return matmul(df_ds, d);
}

SymMatrix jacobian_first_order_retraction(const SymbolicFunction& f, int arg_index) {
  const SymVector& out = f.output();
  const ArgSpec& spec = f.args().at(arg_index);
  const std::vector<Expr> storage = slot_symbols(spec.name, spec.shape());
  const int n = static_cast<int>(out.size());
  const int sdim = static_cast<int>(storage.size());
  const int tdim = spec.tangent_dim();

  const SymMatrix d = storage_D_tangent(f.symbolic_args().at(arg_index));
  const std::vector<Expr> vsyms = delta_symbols(tdim);

  // s_k -> s_k + sum_j D(k, j) v_j, substituted simultaneously.
  ExprMap first_order;
  for (int k = 0; k < sdim; ++k) {
    Expr shift = storage[k];
    for (int j = 0; j < tdim; ++j) shift = shift + d(k, j) * vsyms[j];
    first_order.emplace(storage[k], shift);
  }
  ExprMap at_zero;
  for (const Expr& s : vsyms) at_zero.emplace(s, Expr(0));

  SymMatrix jac(n, tdim);
  for (int r = 0; r < n; ++r) {
    const Expr shifted = substitute(out[r], first_order);
    for (int j = 0; j < tdim; ++j)
      jac(r, j) = substitute(differentiate(shifted, vsyms[j]), at_zero);
  }
  return jac;
}

namespace {

// Storage of F(g (+) v) differentiated at v = 0, with the derivative taken
// through the composed expressions so products of storage-linear factors
// stay in collected monomial form.
template <typename G>
SymMatrix storage_derivative_under_retraction(const G& input, const G& output,
                                              std::span<const Expr> in_storage) {
  const int tdim = LieGroupOps<G>::tangent_dim();
  const int sdim = StorageOps<G>::storage_dim();
  const std::vector<Expr> vsyms = delta_symbols(tdim);
  typename LieGroupOps<G>::Tangent v;
  for (int i = 0; i < tdim; ++i) v[i] = vsyms[i];
  const Expr eps(kDefaultEpsilon);

  const std::vector<Expr> retracted =
      StorageOps<G>::to_storage(LieGroupOps<G>::retract(input, v, eps));
  ExprMap shift;
  for (std::size_t k = 0; k < in_storage.size(); ++k) shift.emplace(in_storage[k], retracted[k]);

  const std::vector<Expr> out_storage = StorageOps<G>::to_storage(output);
  ExprMap at_zero;
  for (const Expr& s : vsyms) at_zero.emplace(s, Expr(0));

  SymMatrix ds(sdim, tdim);
  for (int i = 0; i < sdim; ++i) {
    const Expr perturbed = substitute(out_storage[i], shift);
    for (int j = 0; j < tdim; ++j)
      ds(i, j) = substitute(differentiate(perturbed, vsyms[j]), at_zero);
  }
  return ds;
}

// Of the raw entry and its fully expanded form, keeps whichever is cheaper:
// bilinear quaternion products collapse into rotation-matrix polynomials
// when expanded, while translation terms stay factored.
Expr cheaper_form(const Expr& e) {
  const Expr expanded = expand(e);
  return count_ops(expanded) <= count_ops(e) ? expanded : e;
}

template <typename G>
SymMatrix group_jacobian_impl(const G& input, const G& output, std::span<const Expr> in_storage) {
  const SymMatrix ds = storage_derivative_under_retraction(input, output, in_storage);
  SymMatrix jac = matmul(tangent_D_storage(ArgValue(output)), ds);
  for (Eigen::Index i = 0; i < jac.rows(); ++i)
    for (Eigen::Index j = 0; j < jac.cols(); ++j) jac(i, j) = cheaper_form(jac(i, j));
  return jac;
}

}  // namespace

SymMatrix tangent_jacobian_group_output(const ArgValue& input, const ArgValue& output) {
  const std::vector<Expr> in_storage = argument_storage(input);
  if (std::holds_alternative<Rot3<Expr>>(input) && std::holds_alternative<Rot3<Expr>>(output))
    return group_jacobian_impl(std::get<Rot3<Expr>>(input), std::get<Rot3<Expr>>(output),
                               in_storage);
  if (std::holds_alternative<Pose3<Expr>>(input) && std::holds_alternative<Pose3<Expr>>(output))
    return group_jacobian_impl(std::get<Pose3<Expr>>(input), std::get<Pose3<Expr>>(output),
                               in_storage);
  throw std::invalid_argument(
      "tangent_jacobian_group_output: input and output must be the same group type");
}

// ---------------------------------------------------------------------------
// Linearization kernels

LinearizationKernel generate_linearization(const SymbolicFunction& f,
                                           const std::vector<int>& optimized_args) {
  if (optimized_args.empty())
    throw std::invalid_argument("generate_linearization: no optimized arguments");

  const SymVector& b = f.output();
  const int n = static_cast<int>(b.size());

  LinearizationKernel kernel;
  kernel.residual_dim = n;
  kernel.optimized_args = optimized_args;

  int tdim = 0;
  for (int idx : optimized_args) {
    kernel.arg_tangent_offsets.push_back(tdim);
    const int t = f.args().at(idx).tangent_dim();
    kernel.arg_tangent_dims.push_back(t);
    tdim += t;
  }
  kernel.tangent_dim = tdim;

  // Stacked per-argument tangent Jacobians in optimized order.
  SymMatrix jac(n, tdim);
  for (std::size_t a = 0; a < optimized_args.size(); ++a) {
    const SymMatrix ja = jacobian_first_order_retraction(f, optimized_args[a]);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < kernel.arg_tangent_dims[a]; ++c)
        jac(r, kernel.arg_tangent_offsets[a] + c) = ja(r, c);
  }

  SymMatrix jt(tdim, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < tdim; ++c) jt(c, r) = jac(r, c);
  SymMatrix bmat(n, 1);
  for (int r = 0; r < n; ++r) bmat(r, 0) = b[r];

  const SymMatrix hess = matmul(jt, jac);
  const SymMatrix rhs = matmul(jt, bmat);

  std::vector<Expr> outputs;
  outputs.reserve(n + n * tdim + tdim * tdim + tdim);
  for (int r = 0; r < n; ++r) outputs.push_back(b[r]);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < tdim; ++c) outputs.push_back(jac(r, c));
  for (int r = 0; r < tdim; ++r)
    for (int c = 0; c < tdim; ++c) outputs.push_back(hess(r, c));
  for (int r = 0; r < tdim; ++r) outputs.push_back(rhs(r, 0));

  KernelSignature sig;
  sig.name = f.name() + "_factor";
  std::vector<bool> optimized(f.args().size(), false);
  for (int idx : optimized_args) optimized[idx] = true;
  for (int idx : optimized_args) sig.inputs.push_back({f.args()[idx].name, f.args()[idx].shape()});
  for (std::size_t i = 0; i < f.args().size(); ++i)
    if (!optimized[i]) sig.inputs.push_back({f.args()[i].name, f.args()[i].shape()});
  sig.outputs.push_back({"res", Shape::vector(n)});
  sig.outputs.push_back({"jacobian", Shape::matrix(n, tdim)});
  sig.outputs.push_back({"hessian", Shape::matrix(tdim, tdim)});
  sig.outputs.push_back({"rhs", Shape::vector(tdim)});

  kernel.program = compile(sig, outputs);
  return kernel;
}

}  // namespace symk
