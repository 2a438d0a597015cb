#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mirage/potentials.hpp"

namespace mirage {

// Drude metal in a lossless homogeneous background.  SI units throughout;
// defaults are the silver-like values used by all shipped experiments.
struct DrudeMedium {
  double omega_p = 2e15;                 // plasma frequency [rad/s]
  double tau_relax = 1e-14;              // collision relaxation time [s]
  double eps0 = 8.854187128e-12;         // vacuum permittivity [F/m]
  double mu0 = 1.25663706143591729539e-6;  // 4*pi*1e-7 [H/m]
  double eps_m = 8.854187128e-12;        // background permittivity
  double mu_m = 1.25663706143591729539e-6;  // shared permeability

  double light_speed() const;            // background phase speed
};

// Dispersive particle permittivity eps0*(1 - wp^2/(w(w + i/tau))).
cd drude_epsilon(const DrudeMedium& medium, double omega);
// Contrast (eps_m + eps_D) / (2 (eps_m - eps_D)); its real part increases
// monotonically with omega on (0, omega_p) for the Drude branch.
cd contrast_lambda(const DrudeMedium& medium, double omega);

Wavenumber background_wavenumber(const DrudeMedium& medium, double omega);
Wavenumber particle_wavenumber(const DrudeMedium& medium, double omega);

// Static NP adjoint eigendecomposition in the energy metric.
//
// eigenvalues[0] is the accumulation eigenvalue 1/2 with the unit-mass
// equilibrium density in densities.col(0).  The remaining columns are
// H*-orthonormal eigendensities sorted by descending |lambda|.  Within an
// |lambda| tie the negative/positive twins are interleaved (-, +, -, +,
// ...), and a degenerate eigenspace on a mirror-symmetric curve is rotated
// to a basis of one even and one odd density under theta -> -theta (even
// first).  Both rules remove the eigensolver's arbitrary choices, so the
// mode indices and density columns are reproducible across meshes and
// library versions.
struct NpSpectrum {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd densities;     // mesh_size x (n_modes + 1)
  HStarMetric metric;
  int mesh_size = 0;
  std::vector<std::string> warnings;

  int n_modes() const { return static_cast<int>(eigenvalues.size()) - 1; }
};

// Eigendensity of the static NP adjoint for the eigenvalue 1/2, normalized
// to unit mass <phi0, 1> = 1.
Eigen::VectorXd equilibrium_density(const BoundaryMesh& mesh,
                                    const BoundaryOperator& np_adjoint_static);

NpSpectrum eig_np(const BoundaryMesh& mesh,
                  const BoundaryOperator& np_adjoint_static,
                  const HStarMetric& metric, int n_modes);

// Convenience chain: static operators -> equilibrium density -> metric ->
// eigendecomposition.
NpSpectrum build_spectrum(const BoundaryMesh& mesh, int n_modes);

// Optional high-order correction supplied by the caller; by default the
// logarithmic correction term carries a zero coefficient.
using TauCorrection = std::function<cd(int)>;

// Spectral denominator
//   tau_n = (1/eps_D - 1/eps_m)(lambda(omega) - lambda_n)
//           + (omega delta / c)^2 log(omega delta / c) * correction(n).
cd tau_n(const NpSpectrum& spectrum, const DrudeMedium& medium, double omega,
         int n, double delta, const TauCorrection& correction = {});

struct ResonanceEntry {
  int mode = 0;
  double omega = 0.0;     // where Re lambda(omega) = lambda_n
  double tau_abs = 0.0;   // attained |tau_n(omega)|
};

struct ResonanceTable {
  std::vector<ResonanceEntry> entries;
  std::vector<int> omitted;   // modes without a resonance in range
};

ResonanceTable find_resonances(const NpSpectrum& spectrum,
                               const DrudeMedium& medium, double omega_lo,
                               double omega_hi, double delta,
                               const TauCorrection& correction = {});

// Mode field e_n(x) = S^{k_m}[phi_n](x) away from the boundary.
OffBoundaryEval mode_field(const NpSpectrum& spectrum, const BoundaryMesh& mesh,
                           const Wavenumber& k_m, int n,
                           const Eigen::Vector2d& x);

}  // namespace mirage
