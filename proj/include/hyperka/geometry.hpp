// Poincare-ball operations (curvature fixed at 1) and their vector-Jacobian
// products. Every function is templated on the Eigen expression type so that
// float, double and long double inputs all work; the rest of the library
// instantiates them with double.
//
// Points are column vectors. Every operation that produces a ball point
// re-projects it to norm <= 1 - ball_eps.

#ifndef HYPERKA_GEOMETRY_HPP
#define HYPERKA_GEOMETRY_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace hyperka {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

struct GeometryConfig {
  /// Distance kept between every produced point and the unit sphere.
  double ball_eps = 1e-5;
  /// Below this value of (arccosh argument - 1) the distance gradient is zero.
  double acosh_eps = 1e-15;

  double max_norm() const { return 1.0 - ball_eps; }
  double atanh_clip() const { return 1.0 - ball_eps; }
};

namespace detail {

inline void require_same_size(Eigen::Index a, Eigen::Index b, const char *op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  }
}

// A radial map f(x) = k(|x|) x is described by k and k'(r) / r.
template <typename Scalar>
struct Radial {
  Scalar k;
  Scalar dk_over_r;
};

template <typename Scalar>
Radial<Scalar> exp_radial(Scalar r) {
  using std::tanh;
  if (r < Scalar(1e-3)) {
    const Scalar r2 = r * r;
    return {Scalar(1) - r2 / 3 + Scalar(2) * r2 * r2 / 15,
            Scalar(-2) / 3 + Scalar(8) * r2 / 15};
  }
  const Scalar t = tanh(r);
  const Scalar sech2 = Scalar(1) - t * t;
  return {t / r, (sech2 * r - t) / (r * r * r)};
}

template <typename Scalar>
Radial<Scalar> log_radial(Scalar r, Scalar clip) {
  using std::atanh;
  if (r > clip) {
    const Scalar a = atanh(clip);
    return {a / r, -a / (r * r * r)};
  }
  if (r < Scalar(1e-3)) {
    const Scalar r2 = r * r;
    return {Scalar(1) + r2 / 3 + r2 * r2 / 5,
            Scalar(2) / 3 + Scalar(4) * r2 / 5};
  }
  const Scalar a = atanh(r);
  return {a / r, (r / (Scalar(1) - r * r) - a) / (r * r * r)};
}

template <typename Scalar>
Radial<Scalar> project_radial(Scalar r, Scalar max_norm) {
  if (r <= max_norm) return {Scalar(1), Scalar(0)};
  return {max_norm / r, -max_norm / (r * r * r)};
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> radial_vjp(
    const Eigen::MatrixBase<Derived> &x, const Eigen::MatrixBase<DerivedG> &g,
    const Radial<typename Derived::Scalar> &f) {
  return f.k * g + (f.dk_over_r * x.dot(g)) * x;
}

}  // namespace detail

/// Rescales v onto the sphere of radius 1 - ball_eps when it lies outside it.
template <typename Derived>
VectorX<typename Derived::Scalar> project_to_ball(
    const Eigen::MatrixBase<Derived> &v, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const Scalar max_norm = Scalar(cfg.max_norm());
  const Scalar r = v.norm();
  if (!(r > max_norm)) return v;
  VectorX<Scalar> out = (max_norm / r) * v;
  // rounding can leave the norm an ulp above the bound
  while (out.norm() > max_norm) out *= Scalar(1) - std::numeric_limits<Scalar>::epsilon();
  return out;
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> project_to_ball_vjp(
    const Eigen::MatrixBase<Derived> &v, const Eigen::MatrixBase<DerivedG> &g,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  return detail::radial_vjp(
      v, g, detail::project_radial(Scalar(v.norm()), Scalar(cfg.max_norm())));
}

/// exp_0(v) = tanh(|v|) v / |v|, with exp_0(0) = 0.
template <typename Derived>
VectorX<typename Derived::Scalar> exp_map_0(const Eigen::MatrixBase<Derived> &v,
                                            const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const auto f = detail::exp_radial(Scalar(v.norm()));
  return project_to_ball(f.k * v, cfg);
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> exp_map_0_vjp(
    const Eigen::MatrixBase<Derived> &v, const Eigen::MatrixBase<DerivedG> &g,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const auto f = detail::exp_radial(Scalar(v.norm()));
  const VectorX<Scalar> raw = f.k * v;
  return detail::radial_vjp(v, project_to_ball_vjp(raw, g, cfg), f);
}

/// log_0(u) = artanh(|u|) u / |u|; |u| is clamped to 1 - ball_eps first.
template <typename Derived>
VectorX<typename Derived::Scalar> log_map_0(const Eigen::MatrixBase<Derived> &u,
                                            const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const auto f =
      detail::log_radial(Scalar(u.norm()), Scalar(cfg.atanh_clip()));
  return f.k * u;
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> log_map_0_vjp(
    const Eigen::MatrixBase<Derived> &u, const Eigen::MatrixBase<DerivedG> &g,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  return detail::radial_vjp(
      u, g, detail::log_radial(Scalar(u.norm()), Scalar(cfg.atanh_clip())));
}

/// Mobius addition u (+) v. Not commutative; the origin is a two-sided
/// identity.
template <typename DerivedU, typename DerivedV>
VectorX<typename DerivedU::Scalar> mobius_add(
    const Eigen::MatrixBase<DerivedU> &u, const Eigen::MatrixBase<DerivedV> &v,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename DerivedU::Scalar;
  detail::require_same_size(u.size(), v.size(), "mobius_add");
  const Scalar uv = u.dot(v);
  const Scalar uu = u.squaredNorm();
  const Scalar vv = v.squaredNorm();
  const Scalar a = Scalar(1) + Scalar(2) * uv + vv;
  const Scalar b = Scalar(1) - uu;
  const Scalar d = Scalar(1) + Scalar(2) * uv + uu * vv;
  return project_to_ball(VectorX<Scalar>((a * u + b * v) / d), cfg);
}

/// Returns (dL/du, dL/dv) given dL/d(u (+) v).
template <typename DerivedU, typename DerivedV, typename DerivedG>
std::pair<VectorX<typename DerivedU::Scalar>, VectorX<typename DerivedU::Scalar>>
mobius_add_vjp(const Eigen::MatrixBase<DerivedU> &u,
               const Eigen::MatrixBase<DerivedV> &v,
               const Eigen::MatrixBase<DerivedG> &g_out,
               const GeometryConfig &cfg = {}) {
  using Scalar = typename DerivedU::Scalar;
  using Vec = VectorX<Scalar>;
  detail::require_same_size(u.size(), v.size(), "mobius_add_vjp");
  const Scalar uv = u.dot(v);
  const Scalar uu = u.squaredNorm();
  const Scalar vv = v.squaredNorm();
  const Scalar a = Scalar(1) + Scalar(2) * uv + vv;
  const Scalar b = Scalar(1) - uu;
  const Scalar d = Scalar(1) + Scalar(2) * uv + uu * vv;
  const Vec num = a * u + b * v;

  const Vec g = project_to_ball_vjp(Vec(num / d), g_out, cfg);
  const Vec g_num = g / d;
  const Scalar g_d = -g.dot(num) / (d * d);
  const Scalar g_a = g_num.dot(u);
  const Scalar g_b = g_num.dot(v);

  Vec gu = a * g_num + (Scalar(2) * g_a) * v - (Scalar(2) * g_b) * u +
           g_d * (Scalar(2) * v + (Scalar(2) * vv) * u);
  Vec gv = b * g_num + (Scalar(2) * g_a) * (u + v) +
           g_d * (Scalar(2) * u + (Scalar(2) * uu) * v);
  return {std::move(gu), std::move(gv)};
}

/// d(u, v) = arccosh(1 + 2|u - v|^2 / ((1 - |u|^2)(1 - |v|^2))).
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar hyperbolic_distance(
    const Eigen::MatrixBase<DerivedU> &u, const Eigen::MatrixBase<DerivedV> &v,
    const GeometryConfig & /*cfg*/ = {}) {
  using Scalar = typename DerivedU::Scalar;
  using std::log1p;
  using std::max;
  using std::sqrt;
  detail::require_same_size(u.size(), v.size(), "hyperbolic_distance");
  const Scalar alpha = Scalar(1) - u.squaredNorm();
  const Scalar beta = Scalar(1) - v.squaredNorm();
  // z = arccosh argument - 1; clamped so the argument never drops below 1.
  const Scalar z = max(Scalar(0), Scalar(2) * (u - v).squaredNorm() / (alpha * beta));
  return log1p(z + sqrt(z * (z + Scalar(2))));
}

/// Returns (dd/du * g, dd/dv * g). Zero at coincident points.
template <typename DerivedU, typename DerivedV>
std::pair<VectorX<typename DerivedU::Scalar>, VectorX<typename DerivedU::Scalar>>
hyperbolic_distance_vjp(const Eigen::MatrixBase<DerivedU> &u,
                        const Eigen::MatrixBase<DerivedV> &v,
                        typename DerivedU::Scalar g,
                        const GeometryConfig &cfg = {}) {
  using Scalar = typename DerivedU::Scalar;
  using Vec = VectorX<Scalar>;
  using std::sqrt;
  detail::require_same_size(u.size(), v.size(), "hyperbolic_distance_vjp");
  const Scalar alpha = Scalar(1) - u.squaredNorm();
  const Scalar beta = Scalar(1) - v.squaredNorm();
  const Vec diff = u - v;
  const Scalar w = diff.squaredNorm();
  const Scalar z = Scalar(2) * w / (alpha * beta);
  if (!(z > Scalar(cfg.acosh_eps))) {
    return {Vec::Zero(u.size()), Vec::Zero(v.size())};
  }
  const Scalar dd_dz = g / sqrt(z * (z + Scalar(2)));
  const Scalar c = dd_dz * Scalar(4) / (alpha * beta);
  Vec gu = c * (diff + (w / alpha) * u);
  Vec gv = c * (-diff + (w / beta) * v);
  return {std::move(gu), std::move(gv)};
}

/// M (x) u = exp_0(M log_0(u)); M is (output dim) x (input dim).
template <typename DerivedM, typename DerivedU>
VectorX<typename DerivedU::Scalar> mobius_matvec(
    const Eigen::MatrixBase<DerivedM> &m, const Eigen::MatrixBase<DerivedU> &u,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename DerivedU::Scalar;
  detail::require_same_size(m.cols(), u.size(), "mobius_matvec");
  const VectorX<Scalar> tangent = m * log_map_0(u, cfg);
  return exp_map_0(tangent, cfg);
}

template <typename Scalar>
struct MatvecGrad {
  MatrixX<Scalar> matrix;
  VectorX<Scalar> point;
};

template <typename DerivedM, typename DerivedU, typename DerivedG>
MatvecGrad<typename DerivedU::Scalar> mobius_matvec_vjp(
    const Eigen::MatrixBase<DerivedM> &m, const Eigen::MatrixBase<DerivedU> &u,
    const Eigen::MatrixBase<DerivedG> &g_out, const GeometryConfig &cfg = {}) {
  using Scalar = typename DerivedU::Scalar;
  using Vec = VectorX<Scalar>;
  detail::require_same_size(m.cols(), u.size(), "mobius_matvec_vjp");
  const Vec t = log_map_0(u, cfg);
  const Vec s = m * t;
  const Vec g_s = exp_map_0_vjp(s, g_out, cfg);
  MatvecGrad<Scalar> out;
  out.matrix = g_s * t.transpose();
  out.point = log_map_0_vjp(u, Vec(m.transpose() * g_s), cfg);
  return out;
}

/// Euclidean gradient scaled by the inverse Poincare metric,
/// (1 - |theta|^2)^2 / 4.
template <typename DerivedT, typename DerivedG>
VectorX<typename DerivedG::Scalar> riemannian_rescale(
    const Eigen::MatrixBase<DerivedT> &theta,
    const Eigen::MatrixBase<DerivedG> &grad_e) {
  using Scalar = typename DerivedG::Scalar;
  detail::require_same_size(theta.size(), grad_e.size(), "riemannian_rescale");
  const Scalar s = Scalar(1) - Scalar(theta.squaredNorm());
  return (s * s / Scalar(4)) * grad_e;
}

/// Mean in the tangent space at the origin of the columns of `points`.
template <typename Derived>
VectorX<typename Derived::Scalar> tangent_mean(
    const Eigen::MatrixBase<Derived> &points, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  if (points.cols() == 0) {
    throw std::invalid_argument("tangent_mean: empty point set");
  }
  VectorX<Scalar> acc = VectorX<Scalar>::Zero(points.rows());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    acc += log_map_0(points.col(j), cfg);
  }
  acc /= Scalar(points.cols());
  return exp_map_0(acc, cfg);
}

/// Gradient w.r.t. each column of `points`, one column per point.
template <typename Derived, typename DerivedG>
MatrixX<typename Derived::Scalar> tangent_mean_vjp(
    const Eigen::MatrixBase<Derived> &points,
    const Eigen::MatrixBase<DerivedG> &g_out, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  if (points.cols() == 0) {
    throw std::invalid_argument("tangent_mean_vjp: empty point set");
  }
  const Scalar inv_k = Scalar(1) / Scalar(points.cols());
  VectorX<Scalar> acc = VectorX<Scalar>::Zero(points.rows());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    acc += log_map_0(points.col(j), cfg);
  }
  acc *= inv_k;
  const VectorX<Scalar> g_mean = inv_k * exp_map_0_vjp(acc, g_out, cfg);
  MatrixX<Scalar> out(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    out.col(j) = log_map_0_vjp(points.col(j), g_mean, cfg);
  }
  return out;
}

/// Arithmetic mean of ball coordinates, projected back into the ball.
template <typename Derived>
VectorX<typename Derived::Scalar> coordinate_mean(
    const Eigen::MatrixBase<Derived> &points, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  if (points.cols() == 0) {
    throw std::invalid_argument("coordinate_mean: empty point set");
  }
  return project_to_ball(VectorX<Scalar>(points.rowwise().mean()), cfg);
}

template <typename Derived, typename DerivedG>
MatrixX<typename Derived::Scalar> coordinate_mean_vjp(
    const Eigen::MatrixBase<Derived> &points,
    const Eigen::MatrixBase<DerivedG> &g_out, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  if (points.cols() == 0) {
    throw std::invalid_argument("coordinate_mean_vjp: empty point set");
  }
  const VectorX<Scalar> mean = points.rowwise().mean();
  const VectorX<Scalar> g =
      project_to_ball_vjp(mean, g_out, cfg) / Scalar(points.cols());
  return g.replicate(1, points.cols());
}

/// tanh applied in the tangent space at the origin: exp_0(tanh(log_0(u))).
template <typename Derived>
VectorX<typename Derived::Scalar> tangent_tanh(
    const Eigen::MatrixBase<Derived> &u, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  const VectorX<Scalar> t = log_map_0(u, cfg).array().tanh().matrix();
  return exp_map_0(t, cfg);
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> tangent_tanh_vjp(
    const Eigen::MatrixBase<Derived> &u, const Eigen::MatrixBase<DerivedG> &g_out,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  using Vec = VectorX<Scalar>;
  const Vec a = log_map_0(u, cfg).array().tanh().matrix();
  const Vec g_a = exp_map_0_vjp(a, g_out, cfg);
  const Vec g_t = (g_a.array() * (Scalar(1) - a.array().square())).matrix();
  return log_map_0_vjp(u, g_t, cfg);
}

/// tanh applied to ball coordinates directly.
template <typename Derived>
VectorX<typename Derived::Scalar> coordinate_tanh(
    const Eigen::MatrixBase<Derived> &u, const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  return project_to_ball(VectorX<Scalar>(u.array().tanh().matrix()), cfg);
}

template <typename Derived, typename DerivedG>
VectorX<typename Derived::Scalar> coordinate_tanh_vjp(
    const Eigen::MatrixBase<Derived> &u, const Eigen::MatrixBase<DerivedG> &g_out,
    const GeometryConfig &cfg = {}) {
  using Scalar = typename Derived::Scalar;
  using Vec = VectorX<Scalar>;
  const Vec a = u.array().tanh().matrix();
  const Vec g_a = project_to_ball_vjp(a, g_out, cfg);
  return (g_a.array() * (Scalar(1) - a.array().square())).matrix();
}

}  // namespace hyperka

#endif  // HYPERKA_GEOMETRY_HPP
