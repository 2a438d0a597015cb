#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mirage {

// Closed analytic curves given by a 2*pi-periodic parametrization.  All
// lengths are meters; `scale` is the particle size delta.
enum class CurveKind { disk, flower, diamond, ellipse, fourier };

struct CurveSpec {
  CurveKind kind = CurveKind::disk;
  double scale = 1.0;                    // delta [m]
  Eigen::Vector2d center{0.0, 0.0};      // z_D [m]

  // flower: radius delta*(petal_mean + petal_amplitude*cos(petal_count t))
  double petal_mean = 2.0;
  double petal_amplitude = 0.6;
  int petal_count = 5;

  // diamond: 2*delta*(e^{it} + diamond_coeff e^{-3it}) as a plane curve
  double diamond_coeff = 0.066;

  // ellipse: semi-axes (semi_axis_a, semi_axis_b) in units of delta
  double semi_axis_a = 1.0;
  double semi_axis_b = 5.0;

  // fourier: radius delta*(c0 + sum_j a_j cos(j t) + b_j sin(j t)),
  // cosine[j-1] = a_j, sine[j-1] = b_j
  double fourier_c0 = 2.0;
  std::vector<double> fourier_cos;
  std::vector<double> fourier_sin;
};

class ParametricCurve {
 public:
  Eigen::Vector2d position(double t) const;
  Eigen::Vector2d derivative(double t) const;
  Eigen::Vector2d second_derivative(double t) const;

  double jacobian(double t) const { return derivative(t).norm(); }
  Eigen::Vector2d unit_tangent(double t) const;
  // Outward unit normal of the counterclockwise parametrization.
  Eigen::Vector2d outward_normal(double t) const;
  // Signed curvature (positive for a counterclockwise convex curve).
  double curvature(double t) const;

  const CurveSpec& spec() const { return spec_; }

 private:
  friend ParametricCurve build_curve(const CurveSpec&);
  explicit ParametricCurve(const CurveSpec& spec) : spec_(spec) {}
  // Radial curves (disk/flower/fourier): rho(t) and derivatives.
  void radial(double t, double& rho, double& drho, double& ddrho) const;

  CurveSpec spec_;
};

// Validates parameters and rejects curves with a degenerate tangent.
ParametricCurve build_curve(const CurveSpec& spec);

// Uniformly sampled closed curve: nodes t_j = 2*pi*j/M with per-node frame
// data.  Trapezoid weights w_j = h*|zeta'(t_j)| integrate smooth densities
// over arc length with spectral accuracy.
struct BoundaryMesh {
  ParametricCurve curve;
  double h = 0.0;                 // parameter step 2*pi/M
  Eigen::VectorXd theta;
  Eigen::Matrix2Xd nodes;
  Eigen::Matrix2Xd tangents;      // unit
  Eigen::Matrix2Xd normals;       // unit outward
  Eigen::VectorXd jacobians;      // |zeta'(t_j)|
  Eigen::VectorXd curvatures;
  Eigen::VectorXd weights;        // h * jacobian

  int size() const { return static_cast<int>(theta.size()); }
  double perimeter() const { return weights.sum(); }
};

// M must be even and at least 16.
BoundaryMesh discretize(const ParametricCurve& curve, int M);

// Point-in-region test against the discretized boundary polygon.
bool contains(const BoundaryMesh& mesh, const Eigen::Vector2d& x);

// Distance from x to the nearest mesh node, and the evaluation guard below
// which off-boundary layer potentials lose accuracy (5 local node spacings).
double node_distance(const BoundaryMesh& mesh, const Eigen::Vector2d& x);
double offboundary_guard(const BoundaryMesh& mesh, const Eigen::Vector2d& x);

}  // namespace mirage
