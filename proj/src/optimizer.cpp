#include "symk/optimizer.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace symk {

int element_storage_dim(const Element& e) {
  return std::visit(
      [](const auto& g) -> int {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Eigen::VectorXd>)
          return static_cast<int>(g.size());
        else
          return StorageOps<T>::storage_dim();
      },
      e);
}

int element_tangent_dim(const Element& e) {
  return std::visit(
      [](const auto& g) -> int {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Eigen::VectorXd>)
          return static_cast<int>(g.size());
        else
          return LieGroupOps<T>::tangent_dim();
      },
      e);
}

std::vector<double> element_storage(const Element& e) {
  return std::visit(
      [](const auto& g) -> std::vector<double> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Eigen::VectorXd>)
          return std::vector<double>(g.data(), g.data() + g.size());
        else
          return StorageOps<T>::to_storage(g);
      },
      e);
}

Element element_retract(const Element& e, Eigen::Ref<const Eigen::VectorXd> delta) {
  if (delta.size() != element_tangent_dim(e))
    throw std::invalid_argument("retract: tangent dimension mismatch");
  return std::visit(
      [&](const auto& g) -> Element {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, double>) {
          return g + delta[0];
        } else if constexpr (std::is_same_v<T, Eigen::VectorXd>) {
          return Eigen::VectorXd(g + delta);
        } else {
          typename LieGroupOps<T>::Tangent v = delta;
          return retract(g, v);
        }
      },
      e);
}

Eigen::VectorXd element_local_coordinates(const Element& a, const Element& b) {
  if (a.index() != b.index() || element_tangent_dim(a) != element_tangent_dim(b))
    throw std::invalid_argument("local_coordinates: element type mismatch");
  return std::visit(
      [&](const auto& ga) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(ga)>;
        const auto& gb = std::get<T>(b);
        if constexpr (std::is_same_v<T, double>) {
          return Eigen::VectorXd::Constant(1, gb - ga);
        } else if constexpr (std::is_same_v<T, Eigen::VectorXd>) {
          return Eigen::VectorXd(gb - ga);
        } else {
          return Eigen::VectorXd(local_coordinates(ga, gb));
        }
      },
      a);
}

bool element_matches_shape(const Element& e, const Shape& shape) {
  switch (shape.kind) {
    case Shape::Kind::Scalar:
      return std::holds_alternative<double>(e);
    case Shape::Kind::Matrix:
      return std::holds_alternative<Eigen::VectorXd>(e) && shape.cols == 1 &&
             std::get<Eigen::VectorXd>(e).size() == shape.rows;
    case Shape::Kind::Geometry:
      if (shape.storage == 4) return std::holds_alternative<Rot3<double>>(e);
      if (shape.storage == 7) return std::holds_alternative<Pose3<double>>(e);
      return false;
  }
  return false;
}

void Values::set(const std::string& key, Element value) {
  auto it = index_.find(key);
  if (it == index_.end()) {
    index_.emplace(key, static_cast<int>(order_.size()));
    order_.push_back(key);
    elements_.push_back(std::move(value));
  } else {
    elements_[it->second] = std::move(value);
  }
}

bool Values::has(const std::string& key) const { return index_.count(key) > 0; }

const Element& Values::at(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw std::out_of_range("Values has no key '" + key + "'");
  return elements_[it->second];
}

int TangentLayout::offset_of(const std::string& key) const {
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (keys[i] == key) return offsets[i];
  throw std::out_of_range("layout has no key '" + key + "'");
}

TangentLayout make_layout(const Values& values, const std::vector<std::string>& optimized_keys) {
  TangentLayout layout;
  std::unordered_set<std::string> wanted(optimized_keys.begin(), optimized_keys.end());
  for (const std::string& key : optimized_keys)
    if (!values.has(key)) throw std::out_of_range("layout key '" + key + "' missing from Values");
  // insertion order of the Values fixes the layout
  for (const std::string& key : values.keys()) {
    if (!wanted.count(key)) continue;
    const int dim = element_tangent_dim(values.at(key));
    layout.keys.push_back(key);
    layout.offsets.push_back(layout.total);
    layout.dims.push_back(dim);
    layout.total += dim;
  }
  return layout;
}

Values retract_all(const Values& v, const TangentLayout& layout,
                   Eigen::Ref<const Eigen::VectorXd> delta) {
  if (delta.size() != layout.total)
    throw std::invalid_argument("retract_all: delta has " + std::to_string(delta.size()) +
                                " entries, layout expects " + std::to_string(layout.total));
  Values out = v;
  for (std::size_t i = 0; i < layout.keys.size(); ++i)
    out.set(layout.keys[i],
            element_retract(v.at(layout.keys[i]), delta.segment(layout.offsets[i], layout.dims[i])));
  return out;
}

Eigen::VectorXd local_coordinates_all(const Values& a, const Values& b,
                                      const TangentLayout& layout) {
  Eigen::VectorXd out(layout.total);
  for (std::size_t i = 0; i < layout.keys.size(); ++i)
    out.segment(layout.offsets[i], layout.dims[i]) =
        element_local_coordinates(a.at(layout.keys[i]), b.at(layout.keys[i]));
  return out;
}

Factor make_factor(LinearizationKernel kernel, std::vector<std::string> optimized_keys,
                   std::vector<std::string> constant_keys) {
  if (optimized_keys.size() != kernel.optimized_args.size())
    throw std::invalid_argument("factor binds " + std::to_string(optimized_keys.size()) +
                                " optimized keys, kernel expects " +
                                std::to_string(kernel.optimized_args.size()));
  const std::size_t total = optimized_keys.size() + constant_keys.size();
  if (total != kernel.program.signature.inputs.size())
    throw std::invalid_argument("factor binds " + std::to_string(total) +
                                " keys, kernel signature has " +
                                std::to_string(kernel.program.signature.inputs.size()) +
                                " inputs");
  Factor f;
  f.kernel = std::make_shared<LinearizationKernel>(std::move(kernel));
  f.optimized_keys = std::move(optimized_keys);
  f.constant_keys = std::move(constant_keys);
  return f;
}

LinearizedFactor linearize(const Factor& f, const Values& v) {
  ExecBuffer buf;
  return linearize(f, v, buf);
}

LinearizedFactor linearize(const Factor& f, const Values& v, ExecBuffer& buf) {
  const LinearizationKernel& kernel = *f.kernel;
  const InstructionProgram& prog = kernel.program;

  std::vector<double> inputs;
  inputs.reserve(prog.input_slot_count());
  std::size_t arg = 0;
  for (const auto* key_list : {&f.optimized_keys, &f.constant_keys}) {
    for (const std::string& key : *key_list) {
      const Element& e = v.at(key);
      const Arg& sig_arg = prog.signature.inputs[arg++];
      if (!element_matches_shape(e, sig_arg.shape))
        throw std::invalid_argument("value '" + key + "' does not match kernel input '" +
                                    sig_arg.name + "' of shape " + sig_arg.shape.describe());
      const auto storage = element_storage(e);
      inputs.insert(inputs.end(), storage.begin(), storage.end());
    }
  }

  std::vector<double> out(prog.output_slot_count());
  prog.execute(inputs, out, buf);

  const int n = kernel.residual_dim;
  const int t = kernel.tangent_dim;
  LinearizedFactor lf;
  lf.residual = Eigen::Map<const Eigen::VectorXd>(out.data(), n);
  lf.jacobian = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                               Eigen::RowMajor>>(out.data() + kernel.jac_offset(),
                                                                 n, t);
  lf.hessian = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>(out.data() + kernel.hess_offset(),
                                                                t, t);
  lf.rhs = Eigen::Map<const Eigen::VectorXd>(out.data() + kernel.rhs_offset(), t);
  lf.keys = f.optimized_keys;
  lf.key_dims = kernel.arg_tangent_dims;
  lf.key_offsets = kernel.arg_tangent_offsets;
  return lf;
}

Assembly assemble(std::span<const Factor> factors, const Values& v, const TangentLayout& layout) {
  Assembly a;
  a.hessian = Eigen::MatrixXd::Zero(layout.total, layout.total);
  a.rhs = Eigen::VectorXd::Zero(layout.total);

  int residual_total = 0;
  for (const Factor& f : factors) residual_total += f.kernel->residual_dim;
  a.residual.resize(residual_total);

  ExecBuffer buf;
  int res_row = 0;
  for (const Factor& f : factors) {
    const LinearizedFactor lf = linearize(f, v, buf);
    a.residual.segment(res_row, lf.residual.size()) = lf.residual;
    res_row += static_cast<int>(lf.residual.size());
    for (std::size_t i = 0; i < lf.keys.size(); ++i) {
      const int gi = layout.offset_of(lf.keys[i]);
      a.rhs.segment(gi, lf.key_dims[i]) += lf.rhs.segment(lf.key_offsets[i], lf.key_dims[i]);
      for (std::size_t j = 0; j < lf.keys.size(); ++j) {
        const int gj = layout.offset_of(lf.keys[j]);
        a.hessian.block(gi, gj, lf.key_dims[i], lf.key_dims[j]) +=
            lf.hessian.block(lf.key_offsets[i], lf.key_offsets[j], lf.key_dims[i], lf.key_dims[j]);
      }
    }
  }
  a.total_cost = 0.5 * a.residual.squaredNorm();
  return a;
}

std::string_view to_string(OptStatus s) {
  switch (s) {
    case OptStatus::Success: return "success";
    case OptStatus::MaxIterations: return "max-iterations";
    case OptStatus::Failed: return "failed";
  }
  return "?";
}

OptimizationResult lm_optimize(std::span<const Factor> factors, const Values& initial,
                               const LMParams& params) {
  if (factors.empty()) throw std::invalid_argument("lm_optimize: no factors");

  std::vector<std::string> optimized;
  {
    std::unordered_set<std::string> seen;
    for (const Factor& f : factors)
      for (const std::string& k : f.optimized_keys)
        if (seen.insert(k).second) optimized.push_back(k);
  }
  const TangentLayout layout = make_layout(initial, optimized);
  if (layout.total < 1) throw std::invalid_argument("lm_optimize: empty tangent space");

  OptimizationResult result;
  result.values = initial;
  Assembly current = assemble(factors, result.values, layout);
  result.cost_history.push_back(current.total_cost);

  double lambda = params.lambda_init;
  result.status = OptStatus::MaxIterations;

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    if (current.rhs.lpNorm<Eigen::Infinity>() < 1e-12) {
      result.status = OptStatus::Success;  // Gauss-Newton fixed point
      break;
    }

    // Solve (H + lambda*D) delta = -rhs, retrying with more damping when the
    // factorization hits an indefinite matrix.
    Eigen::VectorXd delta;
    bool solved = false;
    for (int attempt = 0; attempt < 10 && !solved; ++attempt) {
      Eigen::VectorXd damping =
          params.diagonal_damping
              ? current.hessian.diagonal().cwiseMax(1e-12).eval()
              : Eigen::VectorXd::Ones(layout.total).eval();
      Eigen::MatrixXd damped = current.hessian;
      damped.diagonal() += lambda * damping;
      const Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() == Eigen::Success) {
        delta = llt.solve(-current.rhs);
        solved = delta.allFinite();
      }
      if (!solved) lambda *= params.lambda_up;
    }
    if (!solved) {
      result.status = OptStatus::Failed;
      break;
    }

    ++result.iterations;
    const Values candidate = retract_all(result.values, layout, delta);
    Assembly next = assemble(factors, candidate, layout);

    if (next.total_cost < current.total_cost) {
      const double decrease = current.total_cost - next.total_cost;
      const double relative = decrease / std::max(current.total_cost, 1e-300);
      result.values = candidate;
      current = std::move(next);
      result.cost_history.push_back(current.total_cost);
      lambda *= params.lambda_down;
      if (relative < params.early_exit_on_relative_cost_decrease ||
          delta.lpNorm<Eigen::Infinity>() < 1e-12) {
        result.status = OptStatus::Success;
        break;
      }
    } else {
      lambda *= params.lambda_up;
    }
  }
  return result;
}

}  // namespace symk
