#include "mirage/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace mirage {

namespace {
constexpr double kTwoPi = 6.28318530717958647692528677;
}

void ParametricCurve::radial(double t, double& rho, double& drho,
                             double& ddrho) const {
  const double d = spec_.scale;
  switch (spec_.kind) {
    case CurveKind::disk:
      rho = d;
      drho = ddrho = 0.0;
      return;
    case CurveKind::flower: {
      const int p = spec_.petal_count;
      const double a = spec_.petal_amplitude;
      rho = d * (spec_.petal_mean + a * std::cos(p * t));
      drho = -d * a * p * std::sin(p * t);
      ddrho = -d * a * p * p * std::cos(p * t);
      return;
    }
    case CurveKind::fourier: {
      rho = spec_.fourier_c0;
      drho = ddrho = 0.0;
      for (std::size_t j = 0; j < spec_.fourier_cos.size(); ++j) {
        const double n = double(j + 1);
        rho += spec_.fourier_cos[j] * std::cos(n * t);
        drho -= spec_.fourier_cos[j] * n * std::sin(n * t);
        ddrho -= spec_.fourier_cos[j] * n * n * std::cos(n * t);
      }
      for (std::size_t j = 0; j < spec_.fourier_sin.size(); ++j) {
        const double n = double(j + 1);
        rho += spec_.fourier_sin[j] * std::sin(n * t);
        drho += spec_.fourier_sin[j] * n * std::cos(n * t);
        ddrho -= spec_.fourier_sin[j] * n * n * std::sin(n * t);
      }
      rho *= d;
      drho *= d;
      ddrho *= d;
      return;
    }
    default:
      throw std::logic_error("radial() called for a non-radial curve");
  }
}

Eigen::Vector2d ParametricCurve::position(double t) const {
  const double d = spec_.scale;
  const double c = std::cos(t), s = std::sin(t);
  switch (spec_.kind) {
    case CurveKind::ellipse:
      return spec_.center + Eigen::Vector2d(d * spec_.semi_axis_a * c,
                                            d * spec_.semi_axis_b * s);
    case CurveKind::diamond: {
      const double q = spec_.diamond_coeff;
      return spec_.center +
             2.0 * d * Eigen::Vector2d(c + q * std::cos(3.0 * t),
                                       s - q * std::sin(3.0 * t));
    }
    default: {
      double rho, drho, ddrho;
      radial(t, rho, drho, ddrho);
      return spec_.center + rho * Eigen::Vector2d(c, s);
    }
  }
}

Eigen::Vector2d ParametricCurve::derivative(double t) const {
  const double d = spec_.scale;
  const double c = std::cos(t), s = std::sin(t);
  switch (spec_.kind) {
    case CurveKind::ellipse:
      return {-d * spec_.semi_axis_a * s, d * spec_.semi_axis_b * c};
    case CurveKind::diamond: {
      const double q = spec_.diamond_coeff;
      return 2.0 * d *
             Eigen::Vector2d(-s - 3.0 * q * std::sin(3.0 * t),
                             c - 3.0 * q * std::cos(3.0 * t));
    }
    default: {
      double rho, drho, ddrho;
      radial(t, rho, drho, ddrho);
      return drho * Eigen::Vector2d(c, s) + rho * Eigen::Vector2d(-s, c);
    }
  }
}

Eigen::Vector2d ParametricCurve::second_derivative(double t) const {
  const double d = spec_.scale;
  const double c = std::cos(t), s = std::sin(t);
  switch (spec_.kind) {
    case CurveKind::ellipse:
      return {-d * spec_.semi_axis_a * c, -d * spec_.semi_axis_b * s};
    case CurveKind::diamond: {
      const double q = spec_.diamond_coeff;
      return 2.0 * d *
             Eigen::Vector2d(-c - 9.0 * q * std::cos(3.0 * t),
                             -s + 9.0 * q * std::sin(3.0 * t));
    }
    default: {
      double rho, drho, ddrho;
      radial(t, rho, drho, ddrho);
      return (ddrho - rho) * Eigen::Vector2d(c, s) +
             2.0 * drho * Eigen::Vector2d(-s, c);
    }
  }
}

Eigen::Vector2d ParametricCurve::unit_tangent(double t) const {
  const Eigen::Vector2d dp = derivative(t);
  return dp / dp.norm();
}

Eigen::Vector2d ParametricCurve::outward_normal(double t) const {
  const Eigen::Vector2d tau = unit_tangent(t);
  return {tau.y(), -tau.x()};
}

double ParametricCurve::curvature(double t) const {
  const Eigen::Vector2d dp = derivative(t);
  const Eigen::Vector2d ddp = second_derivative(t);
  const double cross = dp.x() * ddp.y() - dp.y() * ddp.x();
  return cross / std::pow(dp.norm(), 3);
}

ParametricCurve build_curve(const CurveSpec& spec) {
  if (!(spec.scale > 0.0))
    throw std::invalid_argument("build_curve: scale must be positive");
  switch (spec.kind) {
    case CurveKind::flower:
      if (!(spec.petal_mean > std::abs(spec.petal_amplitude)))
        throw std::invalid_argument("build_curve: flower radius must stay positive");
      if (spec.petal_count < 1)
        throw std::invalid_argument("build_curve: petal_count must be >= 1");
      break;
    case CurveKind::ellipse:
      if (!(spec.semi_axis_a > 0.0) || !(spec.semi_axis_b > 0.0))
        throw std::invalid_argument("build_curve: semi-axes must be positive");
      break;
    default:
      break;
  }

  ParametricCurve curve(spec);
  // Reject self-degenerate parametrizations (zero tangent or negative radius).
  const int n_check = 512;
  for (int i = 0; i < n_check; ++i) {
    const double t = kTwoPi * i / n_check;
    if (!(curve.jacobian(t) > 1e-14 * spec.scale))
      throw std::invalid_argument("build_curve: degenerate tangent");
    if (spec.kind == CurveKind::disk || spec.kind == CurveKind::flower ||
        spec.kind == CurveKind::fourier) {
      double rho, drho, ddrho;
      curve.radial(t, rho, drho, ddrho);
      if (!(rho > 0.0))
        throw std::invalid_argument("build_curve: radius must stay positive");
    }
  }
  return curve;
}

BoundaryMesh discretize(const ParametricCurve& curve, int M) {
  if (M < 16 || M % 2 != 0)
    throw std::invalid_argument("discretize: M must be even and >= 16");
  BoundaryMesh mesh{curve};
  mesh.h = kTwoPi / M;
  mesh.theta.resize(M);
  mesh.nodes.resize(2, M);
  mesh.tangents.resize(2, M);
  mesh.normals.resize(2, M);
  mesh.jacobians.resize(M);
  mesh.curvatures.resize(M);
  mesh.weights.resize(M);
  for (int j = 0; j < M; ++j) {
    const double t = mesh.h * j;
    mesh.theta[j] = t;
    mesh.nodes.col(j) = curve.position(t);
    const Eigen::Vector2d dp = curve.derivative(t);
    const double jac = dp.norm();
    mesh.jacobians[j] = jac;
    mesh.tangents.col(j) = dp / jac;
    mesh.normals.col(j) = Eigen::Vector2d(dp.y(), -dp.x()) / jac;
    mesh.curvatures[j] = curve.curvature(t);
    mesh.weights[j] = mesh.h * jac;
  }
  return mesh;
}

bool contains(const BoundaryMesh& mesh, const Eigen::Vector2d& x) {
  // Ray crossing against the node polygon; exactness at the polygon edge is
  // irrelevant because callers mask a guard band around the boundary anyway.
  const int m = mesh.size();
  bool inside = false;
  for (int i = 0, j = m - 1; i < m; j = i++) {
    const Eigen::Vector2d a = mesh.nodes.col(i), b = mesh.nodes.col(j);
    if ((a.y() > x.y()) != (b.y() > x.y()) &&
        x.x() < (b.x() - a.x()) * (x.y() - a.y()) / (b.y() - a.y()) + a.x())
      inside = !inside;
  }
  return inside;
}

double node_distance(const BoundaryMesh& mesh, const Eigen::Vector2d& x) {
  return (mesh.nodes.colwise() - x).colwise().norm().minCoeff();
}

double offboundary_guard(const BoundaryMesh& mesh, const Eigen::Vector2d& x) {
  int nearest = 0;
  (mesh.nodes.colwise() - x).colwise().squaredNorm().minCoeff(&nearest);
  return 5.0 * mesh.h * mesh.jacobians[nearest];
}

}  // namespace mirage
