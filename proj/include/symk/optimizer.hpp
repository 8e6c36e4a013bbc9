#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "symk/geometry.hpp"
#include "symk/tangent_diff.hpp"

namespace symk {

using Element = std::variant<double, Eigen::VectorXd, Rot3<double>, Pose3<double>>;

int element_storage_dim(const Element& e);
int element_tangent_dim(const Element& e);
std::vector<double> element_storage(const Element& e);
Element element_retract(const Element& e, Eigen::Ref<const Eigen::VectorXd> delta);
Eigen::VectorXd element_local_coordinates(const Element& a, const Element& b);
bool element_matches_shape(const Element& e, const Shape& shape);

// Ordered key -> element container; insertion order fixes the tangent
// layout of the optimization problem.
class Values {
 public:
  void set(const std::string& key, Element value);
  bool has(const std::string& key) const;
  const Element& at(const std::string& key) const;

  template <typename T>
  const T& get(const std::string& key) const {
    return std::get<T>(at(key));
  }

  const std::vector<std::string>& keys() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;
  std::vector<Element> elements_;
  std::unordered_map<std::string, int> index_;
};

// Contiguous tangent slices for the optimized keys, ordered by their
// position in the Values.
struct TangentLayout {
  std::vector<std::string> keys;
  std::vector<int> offsets;
  std::vector<int> dims;
  int total = 0;

  int offset_of(const std::string& key) const;
};

TangentLayout make_layout(const Values& values, const std::vector<std::string>& optimized_keys);

// Per-key retraction; keys outside the layout are untouched.
Values retract_all(const Values& v, const TangentLayout& layout,
                   Eigen::Ref<const Eigen::VectorXd> delta);
Eigen::VectorXd local_coordinates_all(const Values& a, const Values& b,
                                      const TangentLayout& layout);

// A residual block: a compiled linearization kernel bound to Values keys.
// The kernel's inputs are the concatenation (optimized_keys, constant_keys).
struct Factor {
  std::shared_ptr<const LinearizationKernel> kernel;
  std::vector<std::string> optimized_keys;
  std::vector<std::string> constant_keys;
};

Factor make_factor(LinearizationKernel kernel, std::vector<std::string> optimized_keys,
                   std::vector<std::string> constant_keys = {});

struct LinearizedFactor {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
  Eigen::MatrixXd hessian;
  Eigen::VectorXd rhs;
  std::vector<std::string> keys;  // column slices in optimized-key order
  std::vector<int> key_offsets;
  std::vector<int> key_dims;
};

LinearizedFactor linearize(const Factor& f, const Values& v);
LinearizedFactor linearize(const Factor& f, const Values& v, ExecBuffer& buf);

struct Assembly {
  double total_cost = 0;  // 1/2 sum |b_i|^2
  Eigen::MatrixXd hessian;
  Eigen::VectorXd rhs;
  Eigen::VectorXd residual;  // stacked factor residuals
};

Assembly assemble(std::span<const Factor> factors, const Values& v, const TangentLayout& layout);

struct LMParams {
  double lambda_init = 1.0;
  double lambda_up = 4.0;
  double lambda_down = 0.5;
  int max_iterations = 50;
  double early_exit_on_relative_cost_decrease = 1e-9;
  bool diagonal_damping = true;  // lambda * diag(H) (Marquardt) vs lambda * I
};

enum class OptStatus { Success, MaxIterations, Failed };
std::string_view to_string(OptStatus s);

struct OptimizationResult {
  Values values;
  std::vector<double> cost_history;  // accepted costs, non-increasing
  int iterations = 0;
  OptStatus status = OptStatus::Success;
};

// Tangent-space Levenberg-Marquardt: linearize/assemble, solve the damped
// normal equations, retract, accept on strict cost decrease.
OptimizationResult lm_optimize(std::span<const Factor> factors, const Values& initial,
                               const LMParams& params = {});

}  // namespace symk
