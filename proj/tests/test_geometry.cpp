#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "symk/geometry.hpp"

using namespace symk;

using Rot3d = Rot3<double>;
using Pose3d = Pose3<double>;

namespace {

std::mt19937_64 rng(2024);

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

Eigen::Vector3d random_vec3(double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Eigen::Vector3d(u(rng), u(rng), u(rng));
}

Eigen::Vector3d random_tangent_rot(double max_norm = M_PI - 0.1) {
  std::normal_distribution<double> n(0, 1);
  Eigen::Vector3d dir(n(rng), n(rng), n(rng));
  dir.normalize();
  std::uniform_real_distribution<double> mag(1e-4, max_norm);
  return mag(rng) * dir;
}

Eigen::Matrix3d mat3(const Rot3d& r) {
  Mat3<double> m = to_rotation_matrix(r);
  return Eigen::Matrix3d(m);
}

// Rodrigues rotation matrix, the independent oracle for exp.
Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-300) return Eigen::Matrix3d::Identity();
  const Eigen::Vector3d axis = w / theta;
  Eigen::Matrix3d k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Eigen::Matrix3d::Identity() + std::sin(theta) * k + (1 - std::cos(theta)) * k * k;
}

}  // namespace

TEST_CASE("group axioms for Rot3 and Pose3") {
  for (int i = 0; i < 1000; ++i) {
    const Rot3d a = random_rot(), b = random_rot(), c = random_rot();
    const Eigen::Matrix3d lhs = mat3(compose(compose(a, b), c));
    const Eigen::Matrix3d rhs = mat3(compose(a, compose(b, c)));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

    const Rot3d e = compose(Rot3d::identity(), a);
    CHECK((mat3(e) - mat3(a)).cwiseAbs().maxCoeff() < 1e-12);

    const Rot3d inv = compose(a, inverse(a));
    CHECK((mat3(inv) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (int i = 0; i < 1000; ++i) {
    const Pose3d a = random_pose(), b = random_pose(), c = random_pose();
    const auto lhs = compose(compose(a, b), c);
    const auto rhs = compose(a, compose(b, c));
    CHECK((mat3(lhs.rotation()) - mat3(rhs.rotation())).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((lhs.translation() - rhs.translation()).norm() < 1e-10);

    const Pose3d round = compose(a, inverse(a));
    CHECK(round.translation().norm() < 1e-12);
    CHECK((mat3(round.rotation()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);

    const Pose3d invinv = inverse(inverse(a));
    CHECK((invinv.translation() - a.translation()).norm() < 1e-12);
  }
}

TEST_CASE("compose matches the rotation-matrix product") {
  // Rx(pi/2) twice is Rx(pi)
  const Eigen::Vector3d half_x(M_PI / 2, 0, 0);
  const Rot3d rx = exp<Rot3d>(half_x);
  const Rot3d rx2 = compose(rx, rx);
  CHECK((mat3(rx2) - rodrigues(Eigen::Vector3d(M_PI, 0, 0))).cwiseAbs().maxCoeff() < 1e-12);

  for (int i = 0; i < 100; ++i) {
    const Rot3d a = random_rot(), b = random_rot();
    CHECK((mat3(compose(a, b)) - mat3(a) * mat3(b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("exp and log") {
  // exp(0) is the identity
  const Rot3d e = exp<Rot3d>(Eigen::Vector3d::Zero());
  CHECK(e.x() == 0.0);
  CHECK(e.y() == 0.0);
  CHECK(e.z() == 0.0);
  CHECK(e.w() == 1.0);

  // exp([pi/2, 0, 0]) against the Rodrigues oracle
  const Rot3d r = exp<Rot3d>(Eigen::Vector3d(M_PI / 2, 0, 0));
  CHECK((mat3(r) - rodrigues(Eigen::Vector3d(M_PI / 2, 0, 0))).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.x() == doctest::Approx(std::sin(M_PI / 4)).epsilon(1e-12));
  CHECK(r.w() == doctest::Approx(std::cos(M_PI / 4)).epsilon(1e-12));

  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d v = random_tangent_rot();
    const Eigen::Vector3d back = log(exp<Rot3d>(v));
    CHECK((back - v).norm() < 1e-9);
    CHECK((mat3(exp<Rot3d>(v)) - rodrigues(v)).cwiseAbs().maxCoeff() < 1e-10);
  }

  // log picks the w >= 0 representative of the double cover
  const Rot3d flipped(-e.x(), -e.y(), -e.z(), -1.0);
  CHECK(log(flipped).norm() < 1e-9);

  for (int i = 0; i < 100; ++i) {
    Eigen::Matrix<double, 6, 1> v;
    v.head<3>() = random_tangent_rot();
    v.tail<3>() = random_vec3();
    const Eigen::Matrix<double, 6, 1> back = log(exp<Pose3d>(v));
    CHECK((back - v).norm() < 1e-9);
  }
}

TEST_CASE("retract and local_coordinates are mutual inverses") {
  for (int i = 0; i < 100; ++i) {
    const Rot3d g = random_rot();
    const Eigen::Vector3d v = random_tangent_rot(2.5);
    CHECK((local_coordinates(g, retract(g, v)) - v).norm() < 1e-9);

    const Rot3d same = retract(g, Eigen::Vector3d::Zero());
    CHECK((mat3(same) - mat3(g)).cwiseAbs().maxCoeff() < 1e-12);

    const Pose3d p = random_pose();
    Eigen::Matrix<double, 6, 1> pv;
    pv.head<3>() = random_tangent_rot(2.5);
    pv.tail<3>() = random_vec3();
    CHECK((local_coordinates(p, retract(p, pv)) - pv).norm() < 1e-9);
  }
  // retract at the identity is exp
  const Eigen::Vector3d v(0.3, -0.2, 0.9);
  const Rot3d a = retract(Rot3d::identity(), v);
  const Rot3d b = exp<Rot3d>(v);
  CHECK((a.quaternion() - b.quaternion()).norm() == 0.0);
}

TEST_CASE("storage roundtrip is exact") {
  for (int i = 0; i < 100; ++i) {
    const Pose3d p = random_pose();
    const auto s = StorageOps<Pose3d>::to_storage(p);
    REQUIRE(s.size() == 7);
    const Pose3d back = StorageOps<Pose3d>::from_storage(s);
    CHECK(back.storage() == p.storage());

    const Rot3d r = random_rot();
    const auto rs = StorageOps<Rot3d>::to_storage(r);
    CHECK(StorageOps<Rot3d>::from_storage(rs).quaternion() == r.quaternion());
  }
}

TEST_CASE("transform_point") {
  const Pose3d id;
  const Eigen::Vector3d x(1, 2, 3);
  CHECK((transform_point(id, x) - x).norm() == 0.0);

  for (int i = 0; i < 100; ++i) {
    const Pose3d p = random_pose();
    const Eigen::Vector3d v = random_vec3();
    CHECK((transform_point(p, transform_point(inverse(p), v)) - v).norm() < 1e-12);
  }
}

TEST_CASE("rotation matrices are orthonormal with unit determinant") {
  CHECK((mat3(Rot3d::identity()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Matrix3d r = mat3(random_rot());
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("matmul") {
  const int n = 3;
  SymMatrix a(n, n), id(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a(i, j) = Expr::symbol("m" + std::to_string(i) + std::to_string(j));
      id(i, j) = i == j ? Expr(1) : Expr(0);
    }
  const SymMatrix prod = matmul(a, id);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(prod(i, j) == a(i, j));

  SymMatrix bad(2, 5);
  CHECK_THROWS_AS(matmul(a, bad), std::invalid_argument);

  // dense 6x6 of fully distinct symbols costs (N + (N-1)) N^2 = 396 per occurrence
  SymMatrix x6(6, 6), y6(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      x6(i, j) = Expr::symbol("x" + std::to_string(i) + "_" + std::to_string(j));
      y6(i, j) = Expr::symbol("y" + std::to_string(i) + "_" + std::to_string(j));
    }
  const SymMatrix p6 = matmul(x6, y6);
  std::int64_t total = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) total += count_ops(p6(i, j));
  CHECK(total == 396);
}

TEST_CASE("symbolic and numeric compose agree") {
  std::vector<Expr> sa, sb;
  for (int i = 0; i < 4; ++i) {
    sa.push_back(Expr::symbol("qa" + std::to_string(i)));
    sb.push_back(Expr::symbol("qb" + std::to_string(i)));
  }
  const Rot3<Expr> a = StorageOps<Rot3<Expr>>::from_storage(sa);
  const Rot3<Expr> b = StorageOps<Rot3<Expr>>::from_storage(sb);
  const Rot3<Expr> c = compose(a, b);

  for (int trial = 0; trial < 20; ++trial) {
    const Rot3d na = random_rot(), nb = random_rot();
    Bindings bind;
    const auto as = StorageOps<Rot3d>::to_storage(na);
    const auto bs = StorageOps<Rot3d>::to_storage(nb);
    for (int i = 0; i < 4; ++i) {
      bind["qa" + std::to_string(i)] = as[i];
      bind["qb" + std::to_string(i)] = bs[i];
    }
    const Rot3d nc = compose(na, nb);
    const auto cs = StorageOps<Rot3<Expr>>::to_storage(c);
    const auto ns = StorageOps<Rot3d>::to_storage(nc);
    for (int i = 0; i < 4; ++i) CHECK(evaluate(cs[i], bind) == doctest::Approx(ns[i]).epsilon(1e-12));
  }
}

TEST_CASE("pose inverse gives the point residual structure") {
  // world_point - world_T_local * local_point vanishes when local_point is
  // the world point seen from the local frame.
  for (int i = 0; i < 50; ++i) {
    const Pose3d world_T_local = random_pose();
    const Eigen::Vector3d world_point = random_vec3();
    const Eigen::Vector3d local_point = transform_point(inverse(world_T_local), world_point);
    const Eigen::Vector3d residual = world_point - transform_point(world_T_local, local_point);
    CHECK(residual.norm() < 1e-12);
  }
}

TEST_CASE("numeric unit-norm invariant") {
  for (int i = 0; i < 100; ++i) {
    const Rot3d r = random_rot();
    CHECK(std::fabs(r.quaternion().norm() - 1.0) < 1e-9);
    const Rot3d c = compose(r, random_rot());
    CHECK(std::fabs(c.quaternion().norm() - 1.0) < 1e-9);
  }
}
