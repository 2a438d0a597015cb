#pragma once

#include "mirage/spectrum.hpp"

namespace mirage {

// Point dipole emitter with unit moment; the source amplitude is folded
// into an overall factor of one, which drops out of every fitted quantity.
struct DipoleSource {
  Eigen::Vector2d position{0.0, 0.0};  // z* [m]
  Eigen::Vector2d moment{1.0, 0.0};    // p*, |p*| = 1
  double omega = 0.0;                  // [rad/s]
};

// Incident field u_in(x) = grad Gamma^{k_m}(x - z*) . p* and its gradient.
cd incident_field(const DipoleSource& src, const Wavenumber& k_m,
                  const Eigen::Vector2d& x);
Eigen::Vector2cd incident_gradient(const DipoleSource& src,
                                   const Wavenumber& k_m,
                                   const Eigen::Vector2d& x);

// Transmission-problem densities: the total field is represented as
// S^{k_D}[interior] inside the particle and u_in + S^{k_m}[exterior]
// outside.  residual is the relative algebraic residual of the solved
// (row-equilibrated) system; rcond its reciprocal condition estimate.
struct BiePair {
  Eigen::VectorXcd interior;
  Eigen::VectorXcd exterior;
  double residual = 0.0;
  double rcond = 0.0;
};

BiePair solve_transmission(const BoundaryMesh& mesh, const DrudeMedium& medium,
                           const DipoleSource& src);

// Total field sampled on a sensor ring of the given radius about the origin.
struct FarFieldData {
  double omega = 0.0;
  double radius = 0.0;
  double sigma0 = 0.0;            // relative noise level baked into samples
  Eigen::Matrix2Xd sensors;       // 2 x N positions
  Eigen::VectorXcd samples;       // total field at the sensors
};

// Uniformly spaced sensor ring used by measurement and imaging.
Eigen::Matrix2Xd sensor_ring(double radius, int n_sensors);

FarFieldData measure(const BoundaryMesh& mesh, const DrudeMedium& medium,
                     const DipoleSource& src, const BiePair& solution,
                     double radius, int n_sensors);

// Scattered field (and its gradient) off the boundary.
OffBoundaryEval scattered_field(const BoundaryMesh& mesh,
                                const DrudeMedium& medium,
                                const DipoleSource& src,
                                const BiePair& solution,
                                const Eigen::Vector2d& x);
OffBoundaryGradEval total_field_gradient(const BoundaryMesh& mesh,
                                         const DrudeMedium& medium,
                                         const DipoleSource& src,
                                         const BiePair& solution,
                                         const Eigen::Vector2d& x);

// Modal coupling coefficients alpha_n = <F, phi_n> / tau_n for n = 1..N
// (returned with alpha(n-1) <-> mode n).  F combines the normal Hessian
// trace of the incident field with the interior correction
// -(1/eps_D)(I/2 - K^{k_D,*})(S^{k_D})^{-1}[u_in].
Eigen::VectorXcd compute_coupling(const NpSpectrum& spectrum,
                                  const BoundaryMesh& mesh,
                                  const DrudeMedium& medium,
                                  const DipoleSource& src, int n_modes,
                                  const TauCorrection& correction = {});

// Truncated representation u_in + sum_n alpha_n e_n evaluated off boundary.
OffBoundaryEval modal_field(const NpSpectrum& spectrum,
                            const BoundaryMesh& mesh,
                            const DrudeMedium& medium, const DipoleSource& src,
                            const Eigen::VectorXcd& alphas,
                            const Eigen::Vector2d& x);

}  // namespace mirage
