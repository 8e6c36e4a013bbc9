#pragma once

#include <Eigen/Core>
#include <concepts>
#include <span>
#include <vector>

#include "symk/epsilon.hpp"
#include "symk/expr.hpp"
#include "symk/scalar_ops.hpp"

// Eigen works with Expr as a scalar type (dense containers, sums,
// transposes); products of symbolic matrices go through symk::matmul.
namespace Eigen {
template <>
struct NumTraits<symk::Expr> {
  using Real = symk::Expr;
  using NonInteger = symk::Expr;
  using Nested = symk::Expr;
  using Literal = symk::Expr;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 6,
    MulCost = 6,
  };
  static inline symk::Expr epsilon() { return symk::Expr(0); }
  static inline symk::Expr dummy_precision() { return symk::Expr(0); }
  static inline int digits10() { return 0; }
};
}  // namespace Eigen

namespace symk {

// Scalar-generic counterparts of the symbolic primitives, so one templated
// implementation serves both Expr and double.
inline double sign(double x) { return scalar_ops::sign_value(x); }
inline double min(double a, double b) { return std::fmin(a, b); }
inline double max(double a, double b) { return std::fmax(a, b); }

template <typename Scalar>
Scalar scalar_epsilon() {
  return Scalar(kDefaultEpsilon);
}
template <>
inline float scalar_epsilon<float>() {
  return static_cast<float>(kDefaultEpsilonSingle);
}

using SymMatrix = Eigen::Matrix<Expr, Eigen::Dynamic, Eigen::Dynamic>;
using SymVector = Eigen::Matrix<Expr, Eigen::Dynamic, 1>;

template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

// ---------------------------------------------------------------------------
// Rot3: rotation stored as a unit quaternion [x, y, z, w]

template <typename Scalar>
class Rot3 {
 public:
  static constexpr int kStorageDim = 4;
  static constexpr int kTangentDim = 3;
  using Storage = Eigen::Matrix<Scalar, 4, 1>;

  Rot3() {
    q_ << Scalar(0), Scalar(0), Scalar(0), Scalar(1);
  }
  Rot3(const Scalar& x, const Scalar& y, const Scalar& z, const Scalar& w) {
    q_ << x, y, z, w;
  }
  explicit Rot3(const Storage& q) : q_(q) {}

  static Rot3 identity() { return Rot3(); }

  const Storage& quaternion() const { return q_; }
  const Scalar& x() const { return q_[0]; }
  const Scalar& y() const { return q_[1]; }
  const Scalar& z() const { return q_[2]; }
  const Scalar& w() const { return q_[3]; }

  Storage storage() const { return q_; }

 private:
  Storage q_;
};

// ---------------------------------------------------------------------------
// Pose3: rotation plus translation, storage [qx, qy, qz, qw, tx, ty, tz]

template <typename Scalar>
class Pose3 {
 public:
  static constexpr int kStorageDim = 7;
  static constexpr int kTangentDim = 6;  // [rotation(3); translation(3)]
  using Storage = Eigen::Matrix<Scalar, 7, 1>;

  Pose3() = default;
  Pose3(const Rot3<Scalar>& rotation, const Vec3<Scalar>& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose3 identity() { return Pose3(); }

  const Rot3<Scalar>& rotation() const { return rotation_; }
  const Vec3<Scalar>& translation() const { return translation_; }

  Storage storage() const {
    Storage s;
    s << rotation_.x(), rotation_.y(), rotation_.z(), rotation_.w(), translation_[0],
        translation_[1], translation_[2];
    return s;
  }

 private:
  Rot3<Scalar> rotation_;
  Vec3<Scalar> translation_ = Vec3<Scalar>::Zero();
};

// ---------------------------------------------------------------------------
// Core rotation kernels, shared by the symbolic and numeric paths

// Expanded quadratic form (w^2 + x^2 - y^2 - z^2 on the diagonal), valid
// under the unit-norm assumption; this basis is shared by the tangent-space
// Jacobian expressions, so flattened kernels reuse the same subterms.
template <typename Scalar>
Mat3<Scalar> to_rotation_matrix(const Rot3<Scalar>& g) {
  const Scalar &x = g.x(), &y = g.y(), &z = g.z(), &w = g.w();
  const Scalar xx = x * x, yy = y * y, zz = z * z, ww = w * w;
  const Scalar xy2 = Scalar(2) * x * y, xz2 = Scalar(2) * x * z, yz2 = Scalar(2) * y * z;
  const Scalar wx2 = Scalar(2) * w * x, wy2 = Scalar(2) * w * y, wz2 = Scalar(2) * w * z;
  Mat3<Scalar> r;
  r(0, 0) = ww + xx - yy - zz;
  r(0, 1) = xy2 - wz2;
  r(0, 2) = xz2 + wy2;
  r(1, 0) = xy2 + wz2;
  r(1, 1) = ww - xx + yy - zz;
  r(1, 2) = yz2 - wx2;
  r(2, 0) = xz2 - wy2;
  r(2, 1) = yz2 + wx2;
  r(2, 2) = ww - xx - yy + zz;
  return r;
}

// R * v expanded from quaternion storage.
template <typename Scalar>
Vec3<Scalar> rotate(const Rot3<Scalar>& g, const Vec3<Scalar>& v) {
  const Mat3<Scalar> r = to_rotation_matrix(g);
  Vec3<Scalar> out;
  for (int i = 0; i < 3; ++i) out[i] = r(i, 0) * v[0] + r(i, 1) * v[1] + r(i, 2) * v[2];
  return out;
}

// ---------------------------------------------------------------------------
// Storage / Group / LieGroup concept registry (via template specialization)

template <typename T>
struct StorageOps;
template <typename T>
struct GroupOps;
template <typename T>
struct LieGroupOps;

template <typename T>
concept StorageType = requires(const T& g, std::span<const typename StorageOps<T>::Scalar> s) {
  { StorageOps<T>::storage_dim() } -> std::convertible_to<int>;
  { StorageOps<T>::to_storage(g) } -> std::convertible_to<std::vector<typename StorageOps<T>::Scalar>>;
  { StorageOps<T>::from_storage(s) } -> std::convertible_to<T>;
};

template <typename T>
concept GroupType = StorageType<T> && requires(const T& a, const T& b) {
  { GroupOps<T>::identity() } -> std::convertible_to<T>;
  { GroupOps<T>::compose(a, b) } -> std::convertible_to<T>;
  { GroupOps<T>::inverse(a) } -> std::convertible_to<T>;
};

template <typename T>
concept LieGroupType = GroupType<T> &&
    requires(const T& g, const typename LieGroupOps<T>::Tangent& v,
             const typename StorageOps<T>::Scalar& eps) {
      { LieGroupOps<T>::tangent_dim() } -> std::convertible_to<int>;
      { LieGroupOps<T>::exp(v, eps) } -> std::convertible_to<T>;
      { LieGroupOps<T>::log(g, eps) } -> std::convertible_to<typename LieGroupOps<T>::Tangent>;
    };

// --- Rot3 -------------------------------------------------------------------

template <typename S>
struct StorageOps<Rot3<S>> {
  using Scalar = S;
  static constexpr int storage_dim() { return 4; }
  static std::vector<S> to_storage(const Rot3<S>& g) {
    return {g.x(), g.y(), g.z(), g.w()};
  }
  static Rot3<S> from_storage(std::span<const S> s) { return Rot3<S>(s[0], s[1], s[2], s[3]); }
};

template <typename S>
struct GroupOps<Rot3<S>> {
  static Rot3<S> identity() { return Rot3<S>::identity(); }
  // Hamilton product.
  static Rot3<S> compose(const Rot3<S>& a, const Rot3<S>& b) {
    const S &ax = a.x(), &ay = a.y(), &az = a.z(), &aw = a.w();
    const S &bx = b.x(), &by = b.y(), &bz = b.z(), &bw = b.w();
    return Rot3<S>(aw * bx + ax * bw + ay * bz - az * by,
                   aw * by - ax * bz + ay * bw + az * bx,
                   aw * bz + ax * by - ay * bx + az * bw,
                   aw * bw - ax * bx - ay * by - az * bz);
  }
  static Rot3<S> inverse(const Rot3<S>& g) {
    return Rot3<S>(-g.x(), -g.y(), -g.z(), g.w());
  }
};

template <typename S>
struct LieGroupOps<Rot3<S>> {
  using Tangent = Eigen::Matrix<S, 3, 1>;
  static constexpr int tangent_dim() { return 3; }

  static Rot3<S> retract(const Rot3<S>& g, const Tangent& v, const S& eps) {
    return GroupOps<Rot3<S>>::compose(g, exp(v, eps));
  }
  static Tangent local_coordinates(const Rot3<S>& a, const Rot3<S>& b, const S& eps) {
    return log(GroupOps<Rot3<S>>::compose(GroupOps<Rot3<S>>::inverse(a), b), eps);
  }

  static Rot3<S> exp(const Tangent& v, const S& eps) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const S theta_sq = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    const S theta = sqrt(theta_sq + eps * eps);
    const S half = theta / S(2);
    const S k = sin(half) / theta;
    return Rot3<S>(v[0] * k, v[1] * k, v[2] * k, cos(half));
  }

  static Tangent log(const Rot3<S>& g, const S& eps) {
    using std::atan2;
    using std::sqrt;
    // Pick the quaternion representative with w >= 0 (branchless double cover).
    const S s = S(2) * min(S(0), sign(g.w())) + S(1);
    const S x = s * g.x(), y = s * g.y(), z = s * g.z(), w = s * g.w();
    const S norm_sq = x * x + y * y + z * z;
    const S norm = sqrt(norm_sq + eps * eps);
    const S k = S(2) * atan2(norm, w) / norm;
    Tangent out;
    out << x * k, y * k, z * k;
    return out;
  }
};

// --- Pose3 ------------------------------------------------------------------

template <typename S>
struct StorageOps<Pose3<S>> {
  using Scalar = S;
  static constexpr int storage_dim() { return 7; }
  static std::vector<S> to_storage(const Pose3<S>& g) {
    return {g.rotation().x(), g.rotation().y(), g.rotation().z(), g.rotation().w(),
            g.translation()[0], g.translation()[1], g.translation()[2]};
  }
  static Pose3<S> from_storage(std::span<const S> s) {
    Vec3<S> t;
    t << s[4], s[5], s[6];
    return Pose3<S>(Rot3<S>(s[0], s[1], s[2], s[3]), t);
  }
};

template <typename S>
struct GroupOps<Pose3<S>> {
  static Pose3<S> identity() { return Pose3<S>::identity(); }
  static Pose3<S> compose(const Pose3<S>& a, const Pose3<S>& b) {
    const Vec3<S> t = rotate(a.rotation(), b.translation());
    Vec3<S> translation;
    for (int i = 0; i < 3; ++i) translation[i] = t[i] + a.translation()[i];
    return Pose3<S>(GroupOps<Rot3<S>>::compose(a.rotation(), b.rotation()), translation);
  }
  static Pose3<S> inverse(const Pose3<S>& g) {
    const Rot3<S> rinv = GroupOps<Rot3<S>>::inverse(g.rotation());
    const Vec3<S> t = rotate(rinv, g.translation());
    Vec3<S> translation;
    for (int i = 0; i < 3; ++i) translation[i] = -t[i];
    return Pose3<S>(rinv, translation);
  }
};

// Decoupled SO(3) x R^3 tangent: the rotation retracts on SO(3) and the
// translation retracts by plain addition, so exp([w; u]) = (exp_SO3(w), u)
// and retract/local_coordinates act per component (the direct product, not
// the semidirect SE(3) composition).
template <typename S>
struct LieGroupOps<Pose3<S>> {
  using Tangent = Eigen::Matrix<S, 6, 1>;
  static constexpr int tangent_dim() { return 6; }

  static Pose3<S> exp(const Tangent& v, const S& eps) {
    Vec3<S> w, u;
    w << v[0], v[1], v[2];
    u << v[3], v[4], v[5];
    return Pose3<S>(LieGroupOps<Rot3<S>>::exp(w, eps), u);
  }

  static Tangent log(const Pose3<S>& g, const S& eps) {
    const Vec3<S> w = LieGroupOps<Rot3<S>>::log(g.rotation(), eps);
    Tangent out;
    out << w[0], w[1], w[2], g.translation()[0], g.translation()[1], g.translation()[2];
    return out;
  }

  static Pose3<S> retract(const Pose3<S>& g, const Tangent& v, const S& eps) {
    Vec3<S> w, t;
    w << v[0], v[1], v[2];
    for (int i = 0; i < 3; ++i) t[i] = g.translation()[i] + v[3 + i];
    return Pose3<S>(LieGroupOps<Rot3<S>>::retract(g.rotation(), w, eps), t);
  }

  static Tangent local_coordinates(const Pose3<S>& a, const Pose3<S>& b, const S& eps) {
    const Vec3<S> w = LieGroupOps<Rot3<S>>::local_coordinates(a.rotation(), b.rotation(), eps);
    Tangent out;
    out << w[0], w[1], w[2], b.translation()[0] - a.translation()[0],
        b.translation()[1] - a.translation()[1], b.translation()[2] - a.translation()[2];
    return out;
  }
};

// --- Eigen fixed-size vectors (group under addition) -------------------------

template <typename S, int N>
struct StorageOps<Eigen::Matrix<S, N, 1>> {
  using Scalar = S;
  static constexpr int storage_dim() { return N; }
  static std::vector<S> to_storage(const Eigen::Matrix<S, N, 1>& v) {
    return std::vector<S>(v.data(), v.data() + N);
  }
  static Eigen::Matrix<S, N, 1> from_storage(std::span<const S> s) {
    Eigen::Matrix<S, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = s[i];
    return v;
  }
};

template <typename S, int N>
struct GroupOps<Eigen::Matrix<S, N, 1>> {
  using V = Eigen::Matrix<S, N, 1>;
  static V identity() {
    V v;
    for (int i = 0; i < N; ++i) v[i] = S(0);
    return v;
  }
  static V compose(const V& a, const V& b) {
    V v;
    for (int i = 0; i < N; ++i) v[i] = a[i] + b[i];
    return v;
  }
  static V inverse(const V& a) {
    V v;
    for (int i = 0; i < N; ++i) v[i] = -a[i];
    return v;
  }
};

template <typename S, int N>
struct LieGroupOps<Eigen::Matrix<S, N, 1>> {
  using V = Eigen::Matrix<S, N, 1>;
  using Tangent = V;
  static constexpr int tangent_dim() { return N; }
  static V exp(const Tangent& v, const S&) { return v; }
  static Tangent log(const V& v, const S&) { return v; }
  static V retract(const V& g, const Tangent& v, const S&) {
    return GroupOps<V>::compose(g, v);
  }
  static Tangent local_coordinates(const V& a, const V& b, const S&) {
    return GroupOps<V>::compose(GroupOps<V>::inverse(a), b);
  }
};

// --- Plain scalars -----------------------------------------------------------

template <>
struct StorageOps<double> {
  using Scalar = double;
  static constexpr int storage_dim() { return 1; }
  static std::vector<double> to_storage(double v) { return {v}; }
  static double from_storage(std::span<const double> s) { return s[0]; }
};

template <>
struct GroupOps<double> {
  static double identity() { return 0.0; }
  static double compose(double a, double b) { return a + b; }
  static double inverse(double a) { return -a; }
};

template <>
struct LieGroupOps<double> {
  using Tangent = Eigen::Matrix<double, 1, 1>;
  static constexpr int tangent_dim() { return 1; }
  static double exp(const Tangent& v, double) { return v[0]; }
  static Tangent log(double v, double) { return Tangent{v}; }
  static double retract(double g, const Tangent& v, double) { return g + v[0]; }
  static Tangent local_coordinates(double a, double b, double) { return Tangent{b - a}; }
};

// ---------------------------------------------------------------------------
// Free functions over the registry

template <GroupType G>
G compose(const G& a, const G& b) {
  return GroupOps<G>::compose(a, b);
}

template <GroupType G>
G inverse(const G& g) {
  return GroupOps<G>::inverse(g);
}

template <LieGroupType G>
G exp(const typename LieGroupOps<G>::Tangent& v,
      const typename StorageOps<G>::Scalar& eps = scalar_epsilon<typename StorageOps<G>::Scalar>()) {
  return LieGroupOps<G>::exp(v, eps);
}

template <LieGroupType G>
typename LieGroupOps<G>::Tangent log(
    const G& g,
    const typename StorageOps<G>::Scalar& eps = scalar_epsilon<typename StorageOps<G>::Scalar>()) {
  return LieGroupOps<G>::log(g, eps);
}

// retract(g, v): compose(g, exp(v)) in the group carrying the tangent
// structure (for Pose3 that group is the direct product SO(3) x R^3).
template <LieGroupType G>
G retract(const G& g, const typename LieGroupOps<G>::Tangent& v,
          const typename StorageOps<G>::Scalar& eps =
              scalar_epsilon<typename StorageOps<G>::Scalar>()) {
  return LieGroupOps<G>::retract(g, v, eps);
}

// local_coordinates(a, b): log(compose(inverse(a), b)) in the same group.
template <LieGroupType G>
typename LieGroupOps<G>::Tangent local_coordinates(
    const G& a, const G& b,
    const typename StorageOps<G>::Scalar& eps =
        scalar_epsilon<typename StorageOps<G>::Scalar>()) {
  return LieGroupOps<G>::local_coordinates(a, b, eps);
}

template <typename Scalar>
Vec3<Scalar> transform_point(const Pose3<Scalar>& p, const Vec3<Scalar>& x) {
  const Vec3<Scalar> r = rotate(p.rotation(), x);
  Vec3<Scalar> out;
  for (int i = 0; i < 3; ++i) out[i] = r[i] + p.translation()[i];
  return out;
}

// Dense symbolic product with explicit loops; zero entries vanish at
// construction time.
inline SymMatrix matmul(const SymMatrix& a, const SymMatrix& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: dimension mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + ") * (" + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
  SymMatrix out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      Expr acc(0);
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc = acc + a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

// Numeric promotion to constant expressions.
inline Rot3<Expr> to_symbolic(const Rot3<double>& g) {
  return Rot3<Expr>(Expr(g.x()), Expr(g.y()), Expr(g.z()), Expr(g.w()));
}

inline Pose3<Expr> to_symbolic(const Pose3<double>& g) {
  Vec3<Expr> t;
  for (int i = 0; i < 3; ++i) t[i] = Expr(g.translation()[i]);
  return Pose3<Expr>(to_symbolic(g.rotation()), t);
}

// Numeric binding of symbolic storage.
template <typename G>
G from_numeric_storage(std::span<const double> s) {
  return StorageOps<G>::from_storage(s);
}

static_assert(LieGroupType<Rot3<double>>);
static_assert(LieGroupType<Pose3<double>>);
static_assert(LieGroupType<Rot3<Expr>>);
static_assert(LieGroupType<Pose3<Expr>>);
static_assert(LieGroupType<Vec3<double>>);
static_assert(LieGroupType<double>);

}  // namespace symk
