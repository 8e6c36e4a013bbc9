#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "symk/epsilon.hpp"
#include "symk/tangent_diff.hpp"

namespace symk::registry {

// Symbolic building blocks shared by the CLI, the benchmarks and the tests.

// world_point - world_T_local * local_point
SymbolicFunction point_residual();

// inv(pose) * point, the flattened inverse-compose chain
SymbolicFunction inverse_compose();

// local_coordinates(measured, inv(a) * b)
SymbolicFunction relative_pose_residual();

// scalar function of a rotation: dot(R * p0, q0)
SymbolicFunction rot3_dot();

// the two-helper flattening example
SymbolicFunction func_4_1();
Expr func_4_1_expr(const Expr& a, const Expr& b);

SymbolicFunction snz_func();
SymbolicFunction rot3_exp_func();  // tangent -> quaternion storage
SymbolicFunction rot3_log_func();  // quaternion -> tangent

// The hardcoded sparse 6x6 example matrices over symbols (a, b).
SymMatrix matrix_x_66(const Expr& a, const Expr& b);
SymMatrix matrix_y_66(const Expr& a, const Expr& b);

struct KernelEntry {
  std::string name;
  std::string summary;
  std::function<InstructionProgram()> build;
  // Draws kernel inputs that keep every output finite (poles avoided).
  std::function<std::vector<double>(std::mt19937_64&)> sample_inputs;
};

const std::vector<KernelEntry>& kernel_registry();
const KernelEntry* find_kernel(const std::string& name);
std::vector<std::string> kernel_names();

struct EpsilonEntry {
  std::string name;
  std::string summary;
  Expr f_safe;
  Expr x;
  Expr eps;
  double x0 = 0.0;
};

const std::vector<EpsilonEntry>& epsilon_registry();
const EpsilonEntry* find_epsilon_function(const std::string& name);

}  // namespace symk::registry
