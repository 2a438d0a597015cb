#pragma once

#include <cstdint>
#include <vector>

#include "mirage/imaging.hpp"

namespace mirage {

// Nonlinear-fit controls.  The tolerance is on the simplex diameter in
// meters; multistart counts well-separated |I| peaks used as seeds.
struct OptimizerSettings {
  double z_tol = 1e-12;
  int max_evals = 500;
  int multistart = 5;
};

// Axis-aligned search box the candidate position is clamped to.
struct FitWindow {
  Eigen::Vector2d center{0.0, 0.0};
  double half_width = 0.0;
};

// Precomputed particle-mode patterns available to the corrected fit: ring
// samples of each mode field, plus the complex factor each mode's physical
// amplitude is proportional to at the operating frequency.  Faint modes are
// fitted with their amplitude locked to that factor's phase (a single real
// unknown), which keeps them identifiable; see fit_corrected.
struct ModeBasis {
  Eigen::MatrixXcd farfields;   // n_sensors x n_modes
  Eigen::VectorXcd gains;       // n_modes resonance factors (phase is used)

  int n_modes() const { return static_cast<int>(farfields.cols()); }
};

// One localization task: the backpropagated data image on the fit domain,
// the ring geometry behind it, the optional mode basis, and the search box.
// root_gram is a low-rank square root of the domain Gram of the
// backpropagation map: for any ring vector v, ||root_gram v|| equals the
// root-sum-square of the backpropagated image of v over the unmasked grid
// points.  It lets every candidate evaluation run in the small ring space
// while minimizing exactly the image-domain least-squares objective.
struct LocalizationProblem {
  ImageGrid image;              // fit domain Omega~: geometry, mask, data image
  PsfKernel kernel;             // ring quadrature parameters
  FitWindow window;
  OptimizerSettings settings;
  ModeBasis basis;              // no columns -> uncorrected fit
  Eigen::Matrix2Xd sensors;     // 2 x M ring positions
  Eigen::VectorXcd samples;     // measured ring samples
  Eigen::MatrixXcd back_map;    // 2A x M backpropagation onto active points
  Eigen::MatrixXcd root_gram;   // r x M factor, r = numerical rank
  double cell_area = 0.0;       // grid cell area, the L2 quadrature weight
};

// Builds the problem: backpropagates the data onto the domain grid and
// factorizes the grid Gram of the ring-to-image map.  The domain grid
// supplies geometry and mask only; its values are overwritten.
LocalizationProblem make_problem(const FarFieldData& data,
                                 const DrudeMedium& medium,
                                 const ImageGrid& domain,
                                 const FitWindow& window,
                                 ModeBasis basis = {},
                                 OptimizerSettings settings = {});

// Swaps in new ring samples (same sensors/frequency), reusing the factor.
void set_data(LocalizationProblem& problem, const FarFieldData& data);

// Swaps the mode basis (factor and data untouched).
void set_basis(LocalizationProblem& problem, ModeBasis basis);

struct LocalizationResult {
  Eigen::Vector2d position{0.0, 0.0};
  Eigen::Vector2d moment{0.0, 0.0};   // real dipole vector, amplitude folded in
  Eigen::VectorXcd mode_amplitudes;   // one per basis mode; 0 where dropped
  double objective = 0.0;             // squared L2(Omega~) residual
  double relative_residual = 0.0;     // sqrt(objective) / L2 norm of the image
  int n_evaluations = 0;
  bool converged = false;
  bool regularized = false;  // design matrix was numerically rank-deficient
};

// Least-squares dipole fit of the backpropagated image: position by
// multistart Nelder-Mead over the window (seeded at image peaks), the real
// dipole vector by linear least squares at every candidate position.  The
// dipole response columns are the ring-quadrature backpropagations of a
// point dipole at the candidate, so the model and the data share the same
// sensor geometry exactly.  Requires an empty mode basis.
LocalizationResult fit_uncorrected(const LocalizationProblem& problem);

// Same outer search with the mode patterns as additional linear columns;
// they absorb the particle's resonant contribution so the dipole column no
// longer chases the displaced peak.  Columns whose far-field norm is at
// least 10% of the strongest get a free complex amplitude; columns below
// that (but above 0.1% of the strongest) are phase-locked to their
// resonance factor and contribute one real unknown; the rest are dropped.
// With no basis columns this degenerates to the uncorrected fit.
LocalizationResult fit_corrected(const LocalizationProblem& problem);

// Reconstructs the fitted model on the grid by direct backpropagation and
// returns the L2(Omega~) residual norm.  Independent of the accelerated
// ring-space path; used to verify the two agree.
double image_space_residual(const LocalizationProblem& problem,
                            const LocalizationResult& result);

// Squared L2(Omega~) objective at a fixed candidate position, with the
// linear unknowns solved exactly as in the fits (basis columns included
// whenever the problem carries them).
double objective_at(const LocalizationProblem& problem,
                    const Eigen::Vector2d& z);

// Adds complex white noise of standard deviation
// sigma0 * ||samples|| / sqrt(N) per sample (split evenly between the real
// and imaginary parts).  The generator is seeded per call so realizations
// are reproducible across platforms.
void add_noise(FarFieldData& data, double sigma0, std::uint64_t seed);

struct LocalizationError {
  double position_nm = 0.0;
  double orientation_deg = 0.0;
};

// Position error in nanometers and the acute angle between the fitted and
// true orientation axes in degrees (a dipole and its negation radiate the
// same intensity pattern, so only the axis is identifiable).
LocalizationError error_metrics(const LocalizationResult& fit,
                                const Eigen::Vector2d& true_position,
                                const Eigen::Vector2d& true_moment);

}  // namespace mirage
