#include "symk/registry.hpp"

#include <stdexcept>

namespace symk::registry {

namespace {

Vec3<Expr> as_vec3(const ArgValue& v) {
  const SymVector& s = std::get<SymVector>(v);
  Vec3<Expr> out;
  for (int i = 0; i < 3; ++i) out[i] = s[i];
  return out;
}

SymVector to_sym_vector(const Vec3<Expr>& v) {
  SymVector out(3);
  for (int i = 0; i < 3; ++i) out[i] = v[i];
  return out;
}

std::vector<double> unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  double q[4];
  double norm_sq = 0;
  for (double& c : q) {
    c = n(rng);
    norm_sq += c * c;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  return {q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv};
}

void append_pose(std::vector<double>& out, std::mt19937_64& rng) {
  auto q = unit_quaternion(rng);
  out.insert(out.end(), q.begin(), q.end());
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 3; ++i) out.push_back(u(rng));
}

void append_uniform(std::vector<double>& out, std::mt19937_64& rng, int n, double lo = -2,
                    double hi = 2) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (int i = 0; i < n; ++i) out.push_back(u(rng));
}

}  // namespace

SymbolicFunction point_residual() {
  return SymbolicFunction(
      "point_residual",
      {{"world_T_local", ArgKind::Pose3Arg}, {"world_point", ArgKind::Vector, 3},
       {"local_point", ArgKind::Vector, 3}},
      [](const std::vector<ArgValue>& args) {
        const auto& pose = std::get<Pose3<Expr>>(args[0]);
        const Vec3<Expr> world_point = as_vec3(args[1]);
        const Vec3<Expr> local_point = as_vec3(args[2]);
        const Vec3<Expr> predicted = transform_point(pose, local_point);
        Vec3<Expr> res;
        for (int i = 0; i < 3; ++i) res[i] = world_point[i] - predicted[i];
        return to_sym_vector(res);
      });
}

SymbolicFunction inverse_compose() {
  return SymbolicFunction(
      "inverse_compose", {{"pose", ArgKind::Pose3Arg}, {"point", ArgKind::Vector, 3}},
      [](const std::vector<ArgValue>& args) {
        const auto& pose = std::get<Pose3<Expr>>(args[0]);
        return to_sym_vector(transform_point(inverse(pose), as_vec3(args[1])));
      });
}

SymbolicFunction relative_pose_residual() {
  return SymbolicFunction(
      "relative_pose_residual",
      {{"a", ArgKind::Pose3Arg}, {"b", ArgKind::Pose3Arg}, {"measured", ArgKind::Pose3Arg}},
      [](const std::vector<ArgValue>& args) {
        const auto& a = std::get<Pose3<Expr>>(args[0]);
        const auto& b = std::get<Pose3<Expr>>(args[1]);
        const auto& measured = std::get<Pose3<Expr>>(args[2]);
        const auto tangent = local_coordinates(measured, compose(inverse(a), b));
        SymVector out(6);
        for (int i = 0; i < 6; ++i) out[i] = tangent[i];
        return out;
      });
}

SymbolicFunction rot3_dot() {
  return SymbolicFunction(
      "rot3_dot", {{"rot", ArgKind::Rot3Arg}},
      [](const std::vector<ArgValue>& args) {
        const auto& r = std::get<Rot3<Expr>>(args[0]);
        Vec3<Expr> p0, q0;
        p0 << Expr(1), Expr(2), Expr(3);
        q0 << Expr(0.5), Expr(-1), Expr(2);
        const Vec3<Expr> rp = rotate(r, p0);
        SymVector out(1);
        out[0] = rp[0] * q0[0] + rp[1] * q0[1] + rp[2] * q0[2];
        return out;
      });
}

Expr func_4_1_expr(const Expr& a, const Expr& b) {
  const Expr helper_1 = pow(a, Expr(2)) + abs(a / b) / pow(b, Expr(2));
  const Expr helper_2 = abs(a / b) + (pow(a, Expr(2)) - pow(b, Expr(2)));
  return helper_1 - helper_2;
}

SymbolicFunction func_4_1() {
  return SymbolicFunction("func_4_1", {{"a", ArgKind::Scalar}, {"b", ArgKind::Scalar}},
                          [](const std::vector<ArgValue>& args) {
                            SymVector out(1);
                            out[0] = func_4_1_expr(std::get<Expr>(args[0]), std::get<Expr>(args[1]));
                            return out;
                          });
}

SymbolicFunction snz_func() {
  return SymbolicFunction("snz", {{"x", ArgKind::Scalar}},
                          [](const std::vector<ArgValue>& args) {
                            SymVector out(1);
                            out[0] = sign_no_zero(std::get<Expr>(args[0]));
                            return out;
                          });
}

SymbolicFunction rot3_exp_func() {
  return SymbolicFunction("rot3_exp", {{"w", ArgKind::Vector, 3}},
                          [](const std::vector<ArgValue>& args) {
                            const SymVector& w = std::get<SymVector>(args[0]);
                            Vec3<Expr> v;
                            for (int i = 0; i < 3; ++i) v[i] = w[i];
                            const Rot3<Expr> g =
                                LieGroupOps<Rot3<Expr>>::exp(v, Expr(kDefaultEpsilon));
                            SymVector out(4);
                            const auto s = StorageOps<Rot3<Expr>>::to_storage(g);
                            for (int i = 0; i < 4; ++i) out[i] = s[i];
                            return out;
                          });
}

SymbolicFunction rot3_log_func() {
  return SymbolicFunction("rot3_log", {{"q", ArgKind::Rot3Arg}},
                          [](const std::vector<ArgValue>& args) {
                            const auto& g = std::get<Rot3<Expr>>(args[0]);
                            const auto t = LieGroupOps<Rot3<Expr>>::log(g, Expr(kDefaultEpsilon));
                            SymVector out(3);
                            for (int i = 0; i < 3; ++i) out[i] = t[i];
                            return out;
                          });
}

SymMatrix matrix_x_66(const Expr& a, const Expr& b) {
  const Expr zero(0);
  SymMatrix x(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) x(i, j) = zero;
  x(0, 0) = a;
  x(0, 2) = b;
  x(0, 3) = Expr(2) * b;
  x(1, 1) = a * b;
  x(1, 3) = a / b;
  x(1, 4) = pow(a, Expr(2));
  x(2, 2) = a * pow(b, Expr(2));
  x(2, 4) = a / pow(b, Expr(2));
  x(3, 0) = a / pow(b, Expr(3));
  x(3, 3) = a * pow(b, Expr(3));
  x(3, 5) = a / pow(b, Expr(4));
  x(4, 1) = pow(b, Expr(2));
  x(4, 4) = a * pow(b, Expr(4));
  x(5, 5) = a * pow(b, Expr(4));
  return x;
}

SymMatrix matrix_y_66(const Expr& a, const Expr& b) {
  const Expr zero(0);
  SymMatrix y(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) y(i, j) = zero;
  y(0, 1) = -(a * b);
  y(0, 2) = b;
  y(1, 0) = a * b;
  y(1, 2) = -a;
  y(2, 0) = -b;
  y(2, 1) = a;
  y(3, 1) = pow(a, Expr(2));
  y(3, 3) = a;
  y(4, 2) = pow(b, Expr(2));
  y(4, 4) = b;
  y(5, 0) = pow(a, Expr(2));
  y(5, 5) = a * b;
  return y;
}

// ---------------------------------------------------------------------------
// Kernel registry

namespace {

InstructionProgram compile_value_kernel(const SymbolicFunction& f) {
  const SymVector& out = f.output();
  return compile(f.value_signature(), std::vector<Expr>(out.data(), out.data() + out.size()));
}

InstructionProgram build_inverse_compose_jacobian() {
  const SymbolicFunction f = inverse_compose();
  const SymVector& res = f.output();
  const SymMatrix jac = jacobian_first_order_retraction(f, 0);
  std::vector<Expr> outputs(res.data(), res.data() + res.size());
  for (int r = 0; r < jac.rows(); ++r)
    for (int c = 0; c < jac.cols(); ++c) outputs.push_back(jac(r, c));
  KernelSignature sig{"inverse_compose_jacobian",
                      {{"pose", Shape::geometry(7)}, {"point", Shape::vector(3)}},
                      {{"res", Shape::vector(3)}, {"jacobian", Shape::matrix(3, 6)}}};
  return compile(sig, outputs);
}

InstructionProgram build_pose3_inverse_jacobian() {
  const ArgSpec spec{"pose", ArgKind::Pose3Arg};
  const ArgValue pose = symbolic_argument(spec);
  const Pose3<Expr> inv = inverse(std::get<Pose3<Expr>>(pose));
  const ArgValue out_value = inv;
  const SymMatrix jac = tangent_jacobian_group_output(pose, out_value);
  std::vector<Expr> outputs = argument_storage(out_value);
  for (int r = 0; r < jac.rows(); ++r)
    for (int c = 0; c < jac.cols(); ++c) outputs.push_back(jac(r, c));
  KernelSignature sig{"pose3_inverse_jacobian",
                      {{"pose", Shape::geometry(7)}},
                      {{"res", Shape::geometry(7)}, {"jacobian", Shape::matrix(6, 6)}}};
  return compile(sig, outputs);
}

InstructionProgram build_transform_point_jacobian() {
  const SymbolicFunction f(
      "transform_point", {{"pose", ArgKind::Pose3Arg}, {"point", ArgKind::Vector, 3}},
      [](const std::vector<ArgValue>& args) {
        const auto& pose = std::get<Pose3<Expr>>(args[0]);
        return [&] {
          const SymVector& s = std::get<SymVector>(args[1]);
          Vec3<Expr> p;
          for (int i = 0; i < 3; ++i) p[i] = s[i];
          const Vec3<Expr> r = transform_point(pose, p);
          SymVector out(3);
          for (int i = 0; i < 3; ++i) out[i] = r[i];
          return out;
        }();
      });
  const SymVector& res = f.output();
  const SymMatrix jac = jacobian_first_order_retraction(f, 0);
  std::vector<Expr> outputs(res.data(), res.data() + res.size());
  for (int r = 0; r < jac.rows(); ++r)
    for (int c = 0; c < jac.cols(); ++c) outputs.push_back(jac(r, c));
  KernelSignature sig{"transform_point_jacobian",
                      {{"pose", Shape::geometry(7)}, {"point", Shape::vector(3)}},
                      {{"res", Shape::vector(3)}, {"jacobian", Shape::matrix(3, 6)}}};
  return compile(sig, outputs);
}

InstructionProgram build_point_factor() {
  return generate_linearization(point_residual(), {0}).program;
}

InstructionProgram build_matmul_66() {
  const Expr a = Expr::symbol("a"), b = Expr::symbol("b");
  const SymMatrix prod = matmul(matrix_x_66(a, b), matrix_y_66(a, b));
  std::vector<Expr> outputs;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) outputs.push_back(prod(i, j));
  KernelSignature sig{"matmul_4_2",
                      {{"a", Shape::scalar()}, {"b", Shape::scalar()}},
                      {{"res", Shape::matrix(6, 6)}}};
  return compile(sig, outputs);
}

std::vector<KernelEntry> make_registry() {
  std::vector<KernelEntry> out;

  out.push_back({"func_4_1", "two-helper flattening example",
                 [] { return compile_value_kernel(func_4_1()); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_uniform(in, rng, 1);
                   std::uniform_real_distribution<double> mag(0.3, 2.0);
                   in.push_back((rng() & 1 ? 1.0 : -1.0) * mag(rng));
                   return in;
                 }});

  out.push_back({"point_residual", "world-frame point residual",
                 [] { return compile_value_kernel(point_residual()); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   append_uniform(in, rng, 6);
                   return in;
                 }});

  out.push_back({"point_factor", "point residual linearization (b, J, JtJ, Jtb)",
                 [] { return build_point_factor(); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   append_uniform(in, rng, 6);
                   return in;
                 }});

  out.push_back({"inverse_compose", "inv(pose) * point",
                 [] { return compile_value_kernel(inverse_compose()); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   append_uniform(in, rng, 3);
                   return in;
                 }});

  out.push_back({"inverse_compose_jacobian", "flattened inv(pose) * point with 3x6 Jacobian",
                 [] { return build_inverse_compose_jacobian(); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   append_uniform(in, rng, 3);
                   return in;
                 }});

  out.push_back({"pose3_inverse_jacobian", "pose inverse with 6x6 tangent Jacobian",
                 [] { return build_pose3_inverse_jacobian(); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   return in;
                 }});

  out.push_back({"transform_point_jacobian", "pose * point with 3x6 Jacobian",
                 [] { return build_transform_point_jacobian(); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_pose(in, rng);
                   append_uniform(in, rng, 3);
                   return in;
                 }});

  out.push_back({"rot3_exp", "epsilon-guarded SO(3) exponential",
                 [] { return compile_value_kernel(rot3_exp_func()); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_uniform(in, rng, 3);
                   return in;
                 }});

  out.push_back({"rot3_log", "epsilon-guarded SO(3) logarithm",
                 [] { return compile_value_kernel(rot3_log_func()); },
                 [](std::mt19937_64& rng) { return unit_quaternion(rng); }});

  out.push_back({"snz", "branchless sign-no-zero",
                 [] { return compile_value_kernel(snz_func()); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_uniform(in, rng, 1, -10, 10);
                   return in;
                 }});

  out.push_back({"matmul_4_2", "flattened sparse 6x6 matrix product",
                 [] { return build_matmul_66(); },
                 [](std::mt19937_64& rng) {
                   std::vector<double> in;
                   append_uniform(in, rng, 1);
                   std::uniform_real_distribution<double> mag(0.3, 2.0);
                   in.push_back((rng() & 1 ? 1.0 : -1.0) * mag(rng));
                   return in;
                 }});

  return out;
}

}  // namespace

const std::vector<KernelEntry>& kernel_registry() {
  static const std::vector<KernelEntry>* registry = new std::vector<KernelEntry>(make_registry());
  return *registry;
}

const KernelEntry* find_kernel(const std::string& name) {
  for (const KernelEntry& e : kernel_registry())
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::string> kernel_names() {
  std::vector<std::string> names;
  for (const KernelEntry& e : kernel_registry()) names.push_back(e.name);
  return names;
}

// ---------------------------------------------------------------------------
// Epsilon checker registry

const std::vector<EpsilonEntry>& epsilon_registry() {
  static const std::vector<EpsilonEntry>* registry = [] {
    auto* entries = new std::vector<EpsilonEntry>();
    const Expr x = Expr::symbol("x");
    const Expr eps = Expr::symbol("eps");

    entries->push_back({"sinc", "epsilonized sin(x)/x", epsilonize(sin(x) / x, x, eps), x, eps, 0.0});
    entries->push_back(
        {"one_over_x", "epsilonized 1/x (non-removable)", epsilonize(Expr(1) / x, x, eps), x, eps, 0.0});

    // xyz coefficient of the guarded SO(3) exponential, as a function of |w|
    const Expr theta = sqrt(pow(x, Expr(2)) + pow(eps, Expr(2)));
    entries->push_back({"rot3_exp", "sin(theta/2)/theta guard of the SO(3) exponential",
                        sin(theta / Expr(2)) / theta, x, eps, 0.0});

    // tangent coefficient of the guarded SO(3) logarithm for a unit quaternion
    const Expr norm = sqrt(pow(x, Expr(2)) + pow(eps, Expr(2)));
    const Expr w = sqrt(Expr(1) - pow(x, Expr(2)));
    entries->push_back({"rot3_log", "2*atan2(norm, w)/norm guard of the SO(3) logarithm",
                        Expr(2) * atan2(norm, w) / norm, x, eps, 0.0});
    return entries;
  }();
  return *registry;
}

const EpsilonEntry* find_epsilon_function(const std::string& name) {
  for (const EpsilonEntry& e : epsilon_registry())
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace symk::registry
