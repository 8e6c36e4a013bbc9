#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "symk/registry.hpp"
#include "symk/tangent_diff.hpp"

using namespace symk;

using Rot3d = Rot3<double>;
using Pose3d = Pose3<double>;

namespace {

std::mt19937_64 rng(77);

Rot3d random_rot() {
  std::normal_distribution<double> n(0, 1);
  Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return Rot3d(q[0], q[1], q[2], q[3]);
}

Pose3d random_pose() {
  std::uniform_real_distribution<double> u(-2, 2);
  return Pose3d(random_rot(), Eigen::Vector3d(u(rng), u(rng), u(rng)));
}

void bind_storage(Bindings& b, const std::string& name, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i)
    b[name + "[" + std::to_string(i) + "]"] = values[i];
}

Eigen::MatrixXd eval_mat(const SymMatrix& m, const Bindings& b) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = evaluate(m(i, j), b);
  return out;
}

Eigen::Vector3d point_residual_numeric(const Pose3d& pose, const Eigen::Vector3d& wp,
                                       const Eigen::Vector3d& lp) {
  return wp - transform_point(pose, lp);
}

}  // namespace

TEST_CASE("storage_D_tangent of Rot3 at the identity is [I/2; 0]") {
  const ArgSpec spec{"q", ArgKind::Rot3Arg};
  const SymMatrix d = storage_D_tangent(symbolic_argument(spec));
  REQUIRE(d.rows() == 4);
  REQUIRE(d.cols() == 3);
  Bindings b;
  const double identity[4] = {0, 0, 0, 1};
  bind_storage(b, "q", identity);
  const Eigen::MatrixXd num = eval_mat(d, b);
  Eigen::MatrixXd expected(4, 3);
  expected.setZero();
  expected.topLeftCorner<3, 3>() = 0.5 * Eigen::Matrix3d::Identity();
  CHECK((num - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("storage_D_tangent of Pose3 has zero cross blocks") {
  const ArgSpec spec{"p", ArgKind::Pose3Arg};
  const SymMatrix d = storage_D_tangent(symbolic_argument(spec));
  REQUIRE(d.rows() == 7);
  REQUIRE(d.cols() == 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 3; j < 6; ++j) CHECK(d(i, j).is_zero());
  for (int i = 4; i < 7; ++i)
    for (int j = 0; j < 3; ++j) CHECK(d(i, j).is_zero());
}

TEST_CASE("storage_D_tangent matches finite differences of retraction") {
  const ArgSpec rot_spec{"q", ArgKind::Rot3Arg};
  const SymMatrix d_rot = storage_D_tangent(symbolic_argument(rot_spec));
  const ArgSpec pose_spec{"p", ArgKind::Pose3Arg};
  const SymMatrix d_pose = storage_D_tangent(symbolic_argument(pose_spec));
  const double h = 1e-7;

  for (int trial = 0; trial < 100; ++trial) {
    const Rot3d g = random_rot();
    Bindings b;
    const auto s = StorageOps<Rot3d>::to_storage(g);
    bind_storage(b, "q", s);
    const Eigen::MatrixXd sym = eval_mat(d_rot, b);
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d v = Eigen::Vector3d::Zero();
      v[j] = h;
      const auto plus = StorageOps<Rot3d>::to_storage(retract(g, v));
      v[j] = -h;
      const auto minus = StorageOps<Rot3d>::to_storage(retract(g, v));
      for (int i = 0; i < 4; ++i)
        CHECK(sym(i, j) == doctest::Approx((plus[i] - minus[i]) / (2 * h)).epsilon(1e-6));
    }

    const Pose3d p = random_pose();
    Bindings bp;
    const auto ps = StorageOps<Pose3d>::to_storage(p);
    bind_storage(bp, "p", ps);
    const Eigen::MatrixXd psym = eval_mat(d_pose, bp);
    for (int j = 0; j < 6; ++j) {
      Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
      v[j] = h;
      const auto plus = StorageOps<Pose3d>::to_storage(retract(p, v));
      v[j] = -h;
      const auto minus = StorageOps<Pose3d>::to_storage(retract(p, v));
      for (int i = 0; i < 7; ++i)
        CHECK(psym(i, j) == doctest::Approx((plus[i] - minus[i]) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("tangent_D_storage is a left inverse of storage_D_tangent") {
  for (const ArgKind kind : {ArgKind::Rot3Arg, ArgKind::Pose3Arg}) {
    const ArgSpec spec{"g", kind};
    const ArgValue g = symbolic_argument(spec);
    const SymMatrix prod = matmul(tangent_D_storage(g), storage_D_tangent(g));
    const int t = kind == ArgKind::Rot3Arg ? 3 : 6;
    REQUIRE(prod.rows() == t);
    for (int trial = 0; trial < 20; ++trial) {
      Bindings b;
      if (kind == ArgKind::Rot3Arg) {
        bind_storage(b, "g", StorageOps<Rot3d>::to_storage(random_rot()));
      } else {
        bind_storage(b, "g", StorageOps<Pose3d>::to_storage(random_pose()));
      }
      const Eigen::MatrixXd num = eval_mat(prod, b);
      CHECK((num - Eigen::MatrixXd::Identity(t, t)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("log against a fixed target has Jacobian -I at the target") {
  const Rot3d target = random_rot();
  const Rot3<Expr> target_sym = to_symbolic(target);
  const SymbolicFunction f(
      "log_to_target", {{"rot", ArgKind::Rot3Arg}},
      [target_sym](const std::vector<ArgValue>& args) {
        const auto& r = std::get<Rot3<Expr>>(args[0]);
        const auto t = local_coordinates(r, target_sym);
        SymVector out(3);
        for (int i = 0; i < 3; ++i) out[i] = t[i];
        return out;
      });

  for (const SymMatrix& jac : {jacobian_chain_rule(f, 0), jacobian_first_order_retraction(f, 0)}) {
    Bindings b;
    bind_storage(b, "rot", StorageOps<Rot3d>::to_storage(target));
    const Eigen::MatrixXd num = eval_mat(jac, b);
    CHECK((num + Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("constant functions have zero Jacobians") {
  const SymbolicFunction f("constant", {{"rot", ArgKind::Rot3Arg}},
                           [](const std::vector<ArgValue>&) {
                             SymVector out(2);
                             out[0] = Expr(3);
                             out[1] = Expr(-1);
                             return out;
                           });
  const SymMatrix j1 = jacobian_chain_rule(f, 0);
  const SymMatrix j2 = jacobian_first_order_retraction(f, 0);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      CHECK(j1(r, c).is_zero());
      CHECK(j2(r, c).is_zero());
    }
}

TEST_CASE("the two Jacobian methods agree and match finite differences") {
  struct Case {
    SymbolicFunction f;
    int arg;
  };
  std::vector<Case> cases;
  cases.push_back({registry::point_residual(), 0});
  cases.push_back({registry::relative_pose_residual(), 0});
  cases.push_back({registry::relative_pose_residual(), 1});
  cases.push_back({registry::rot3_dot(), 0});

  for (const Case& c : cases) {
    const SymMatrix chain = jacobian_chain_rule(c.f, c.arg);
    const SymMatrix first = jacobian_first_order_retraction(c.f, c.arg);
    REQUIRE(chain.rows() == first.rows());
    REQUIRE(chain.cols() == first.cols());
    const auto& spec = c.f.args()[c.arg];

    for (int trial = 0; trial < 100; ++trial) {
      // numeric values for every argument
      Bindings b;
      std::vector<std::vector<double>> values;
      for (const ArgSpec& a : c.f.args()) {
        std::vector<double> v;
        if (a.kind == ArgKind::Pose3Arg) {
          v = StorageOps<Pose3d>::to_storage(random_pose());
        } else if (a.kind == ArgKind::Rot3Arg) {
          v = StorageOps<Rot3d>::to_storage(random_rot());
        } else {
          std::uniform_real_distribution<double> u(-2, 2);
          for (int i = 0; i < a.storage_dim(); ++i) v.push_back(u(rng));
        }
        if (a.kind == ArgKind::Scalar)
          b[a.name] = v[0];
        else
          bind_storage(b, a.name, v);
        values.push_back(v);
      }

      const Eigen::MatrixXd jc = eval_mat(chain, b);
      const Eigen::MatrixXd jf = eval_mat(first, b);
      CHECK((jc - jf).cwiseAbs().maxCoeff() < 1e-10);

      // finite differences through the numeric evaluation of the output
      const SymVector& out = c.f.output();
      const double h = 1e-6;
      for (int j = 0; j < spec.tangent_dim(); ++j) {
        auto eval_perturbed = [&](double step) {
          Bindings bp = b;
          std::vector<double> pert = values[c.arg];
          if (spec.kind == ArgKind::Pose3Arg) {
            Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
            v[j] = step;
            pert = StorageOps<Pose3d>::to_storage(
                retract(StorageOps<Pose3d>::from_storage(values[c.arg]), v));
          } else if (spec.kind == ArgKind::Rot3Arg) {
            Eigen::Vector3d v = Eigen::Vector3d::Zero();
            v[j] = step;
            pert = StorageOps<Rot3d>::to_storage(
                retract(StorageOps<Rot3d>::from_storage(values[c.arg]), v));
          } else {
            pert[j] += step;
          }
          if (spec.kind == ArgKind::Scalar)
            bp[spec.name] = pert[0];
          else
            bind_storage(bp, spec.name, pert);
          Eigen::VectorXd r(out.size());
          for (Eigen::Index i = 0; i < out.size(); ++i) r[i] = evaluate(out[i], bp);
          return r;
        };
        const Eigen::VectorXd fd = (eval_perturbed(h) - eval_perturbed(-h)) / (2 * h);
        for (Eigen::Index i = 0; i < fd.size(); ++i)
          CHECK(jf(i, j) == doctest::Approx(fd[i]).epsilon(1e-6));
      }
      if (trial >= 10) continue;  // finite differences only on a subset for speed
    }
  }
}

TEST_CASE("first-order retraction kernels are no more expensive than chain rule") {
  const SymbolicFunction f = registry::point_residual();
  const SymMatrix chain = jacobian_chain_rule(f, 0);
  const SymMatrix first = jacobian_first_order_retraction(f, 0);
  auto compile_jac = [&](const SymMatrix& j, const std::string& name) {
    std::vector<Expr> outs;
    for (int r = 0; r < j.rows(); ++r)
      for (int c = 0; c < j.cols(); ++c) outs.push_back(j(r, c));
    KernelSignature sig{name,
                        {{"world_T_local", Shape::geometry(7)},
                         {"world_point", Shape::vector(3)},
                         {"local_point", Shape::vector(3)}},
                        {{"jac", Shape::matrix(3, 6)}}};
    return compile(sig, outs);
  };
  const auto first_prog = compile_jac(first, "jac_first_order");
  const auto chain_prog = compile_jac(chain, "jac_chain_rule");
  CHECK(first_prog.op_count <= chain_prog.op_count);
}

TEST_CASE("generate_linearization for the point factor") {
  const LinearizationKernel kernel = generate_linearization(registry::point_residual(), {0});
  CHECK(kernel.residual_dim == 3);
  CHECK(kernel.tangent_dim == 6);
  REQUIRE(kernel.program.signature.outputs.size() == 4);
  CHECK(kernel.program.signature.outputs[0].shape.slot_count() == 3);
  CHECK(kernel.program.signature.outputs[1].shape.rows == 3);
  CHECK(kernel.program.signature.outputs[1].shape.cols == 6);
  CHECK(kernel.program.signature.outputs[2].shape.rows == 6);
  CHECK(kernel.program.signature.outputs[2].shape.cols == 6);
  CHECK(kernel.program.signature.outputs[3].shape.slot_count() == 6);

  ExecBuffer buf;
  std::vector<double> out(kernel.program.output_slot_count());

  for (int trial = 0; trial < 100; ++trial) {
    const Pose3d pose = random_pose();
    std::uniform_real_distribution<double> u(-2, 2);
    const Eigen::Vector3d wp(u(rng), u(rng), u(rng));
    const Eigen::Vector3d lp(u(rng), u(rng), u(rng));

    std::vector<double> in = StorageOps<Pose3d>::to_storage(pose);
    for (int i = 0; i < 3; ++i) in.push_back(wp[i]);
    for (int i = 0; i < 3; ++i) in.push_back(lp[i]);
    kernel.program.execute(in, out, buf);

    Eigen::Map<Eigen::Vector3d> b(out.data());
    Eigen::Matrix<double, 3, 6> jac;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 6; ++c) jac(r, c) = out[kernel.jac_offset() + r * 6 + c];
    Eigen::Matrix<double, 6, 6> hess;
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) hess(r, c) = out[kernel.hess_offset() + r * 6 + c];
    Eigen::Map<Eigen::Matrix<double, 6, 1>> rhs(out.data() + kernel.rhs_offset());

    // residual
    CHECK((b - point_residual_numeric(pose, wp, lp)).norm() < 1e-12);

    // J against finite differences of the residual under retraction
    const double h = 1e-6;
    for (int j = 0; j < 6; ++j) {
      Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
      v[j] = h;
      const Eigen::Vector3d plus = point_residual_numeric(retract(pose, v), wp, lp);
      v[j] = -h;
      const Eigen::Vector3d minus = point_residual_numeric(retract(pose, v), wp, lp);
      const Eigen::Vector3d fd = (plus - minus) / (2 * h);
      for (int i = 0; i < 3; ++i) CHECK(jac(i, j) == doctest::Approx(fd[i]).epsilon(1e-6));
    }

    // Gauss-Newton blocks are consistent with J and b
    CHECK((hess - jac.transpose() * jac).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((rhs - jac.transpose() * b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((hess - hess.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }

  // zero residual at a consistent measurement
  const Pose3d pose = random_pose();
  std::uniform_real_distribution<double> u(-2, 2);
  const Eigen::Vector3d wp(u(rng), u(rng), u(rng));
  const Eigen::Vector3d lp = transform_point(inverse(pose), wp);
  std::vector<double> in = StorageOps<Pose3d>::to_storage(pose);
  for (int i = 0; i < 3; ++i) in.push_back(wp[i]);
  for (int i = 0; i < 3; ++i) in.push_back(lp[i]);
  kernel.program.execute(in, out, buf);
  for (int i = 0; i < 3; ++i) CHECK(std::fabs(out[i]) < 1e-12);
  for (int i = 0; i < 6; ++i) CHECK(std::fabs(out[kernel.rhs_offset() + i]) < 1e-11);
}

TEST_CASE("identically zero residuals give all-zero kernels") {
  const SymbolicFunction zero("zero", {{"rot", ArgKind::Rot3Arg}},
                              [](const std::vector<ArgValue>&) {
                                SymVector out(2);
                                out[0] = Expr(0);
                                out[1] = Expr(0);
                                return out;
                              });
  const LinearizationKernel kernel = generate_linearization(zero, {0});
  CHECK(kernel.program.op_count == 0);
  const std::vector<double> in = {0, 0, 0, 1};
  for (double v : kernel.program.execute(in)) CHECK(v == 0.0);
}

TEST_CASE("group-valued tangent Jacobian of pose inverse matches finite differences") {
  const ArgSpec spec{"pose", ArgKind::Pose3Arg};
  const ArgValue pose_sym = symbolic_argument(spec);
  const Pose3<Expr> inv_sym = inverse(std::get<Pose3<Expr>>(pose_sym));
  const SymMatrix jac = tangent_jacobian_group_output(pose_sym, ArgValue(inv_sym));
  REQUIRE(jac.rows() == 6);
  REQUIRE(jac.cols() == 6);

  for (int trial = 0; trial < 50; ++trial) {
    const Pose3d g = random_pose();
    Bindings b;
    bind_storage(b, "pose", StorageOps<Pose3d>::to_storage(g));
    const Eigen::MatrixXd num = eval_mat(jac, b);
    const double h = 1e-6;
    const Pose3d inv_g = inverse(g);
    for (int j = 0; j < 6; ++j) {
      Eigen::Matrix<double, 6, 1> v = Eigen::Matrix<double, 6, 1>::Zero();
      v[j] = h;
      const auto plus = local_coordinates(inv_g, inverse(retract(g, v)));
      v[j] = -h;
      const auto minus = local_coordinates(inv_g, inverse(retract(g, v)));
      const Eigen::Matrix<double, 6, 1> fd = (plus - minus) / (2 * h);
      for (int i = 0; i < 6; ++i) CHECK(num(i, j) == doctest::Approx(fd[i]).epsilon(1e-5));
    }
  }
}
