#pragma once

#include <string>
#include <vector>

#include "mirage/forward.hpp"
#include "mirage/spectrum.hpp"

namespace mirage {

// Square evaluation grid for vector images I(z).  Points are stored
// column-major (x fastest); masked points fall inside the particle or its
// near-boundary evaluation guard and are excluded from fits.
struct ImageGrid {
  Eigen::Vector2d center{0.0, 0.0};
  double spacing = 0.0;
  int n_side = 0;
  Eigen::Matrix2Xd points;
  Eigen::Matrix2Xcd values;       // 2 x n_points, both image components
  std::vector<std::uint8_t> mask; // 1 = excluded
  std::string provenance;

  int n_points() const { return n_side * n_side; }
  int active_points() const;
};

// n_side points per axis spanning center +- half_width.  When a mesh is
// given, points inside the particle or its evaluation guard are masked.
ImageGrid make_image_grid(const Eigen::Vector2d& center, double half_width,
                          int n_side, const BoundaryMesh* mesh = nullptr);

// Backpropagation image I(z) = sum_i conj(grad_z Gamma^{k_m}(x_i, z)) u_i w_i
// over the sensor ring (arc-length trapezoid weights).
void backpropagate(const FarFieldData& data, const DrudeMedium& medium,
                   ImageGrid& grid);

// One backpropagation image per surface mode: the mode's exterior field is
// sampled on the sensor ring and imaged on a copy of `grid`.  These are the
// reusable per-mode artifacts consumed when diagnosing a mode basis.
std::vector<ImageGrid> mode_images(const NpSpectrum& spectrum,
                                   const BoundaryMesh& mesh,
                                   const DrudeMedium& medium, double omega,
                                   double radius, int n_sensors,
                                   const ImageGrid& grid, int n_modes);

// Point-spread kernel R(y,z) of the sensor ring.
struct PsfKernel {
  double k_m = 0.0;      // background wavenumber
  double radius = 0.0;   // sensor ring radius (quadrature mode)
  int n_sensors = 0;
};

// Sensor-ring quadrature of conj(grad_y Gamma) grad_z Gamma^T.
Eigen::Matrix2cd psf_quadrature(const PsfKernel& psf, const Eigen::Vector2d& y,
                                const Eigen::Vector2d& z);
// Large-radius closed form (1/4)[k J0(kr) P - 2 J1(kr)/r P + J1(kr)/r I]
// with P the unit outer product of y - z; equals (k/8) I at y = z.
Eigen::Matrix2d psf_closed(double k_m, const Eigen::Vector2d& y,
                           const Eigen::Vector2d& z);

}  // namespace mirage
