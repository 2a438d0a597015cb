#include "mirage/imaging.hpp"

#include <sstream>
#include <stdexcept>

#include "mirage/bessel.hpp"

namespace mirage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

int ImageGrid::active_points() const {
  int count = 0;
  for (std::uint8_t m : mask)
    if (!m) ++count;
  return count;
}

ImageGrid make_image_grid(const Eigen::Vector2d& center, double half_width,
                          int n_side, const BoundaryMesh* mesh) {
  if (n_side < 1 || !(half_width > 0.0))
    throw std::invalid_argument("make_image_grid: bad parameters");
  ImageGrid grid;
  grid.center = center;
  grid.n_side = n_side;
  grid.spacing = n_side > 1 ? 2.0 * half_width / (n_side - 1) : 0.0;
  const int npts = n_side * n_side;
  grid.points.resize(2, npts);
  grid.values = Eigen::Matrix2Xcd::Zero(2, npts);
  grid.mask.assign(npts, 0);
  for (int iy = 0; iy < n_side; ++iy) {
    for (int ix = 0; ix < n_side; ++ix) {
      const int j = iy * n_side + ix;
      Eigen::Vector2d z = center;
      if (n_side > 1) {
        z.x() += -half_width + ix * grid.spacing;
        z.y() += -half_width + iy * grid.spacing;
      }
      grid.points.col(j) = z;
      if (mesh != nullptr &&
          (contains(*mesh, z) ||
           node_distance(*mesh, z) < offboundary_guard(*mesh, z)))
        grid.mask[j] = 1;
    }
  }
  return grid;
}

void backpropagate(const FarFieldData& data, const DrudeMedium& medium,
                   ImageGrid& grid) {
  const int n = static_cast<int>(data.samples.size());
  if (n == 0 || data.sensors.cols() != n)
    throw std::invalid_argument("backpropagate: empty or inconsistent data");
  const Wavenumber k_m = background_wavenumber(medium, data.omega);
  const double w = kTwoPi * data.radius / n;
  for (int j = 0; j < grid.points.cols(); ++j) {
    const Eigen::Vector2d z = grid.points.col(j);
    Eigen::Vector2cd acc = Eigen::Vector2cd::Zero();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2cd g =
          -grad_gamma(k_m, data.sensors.col(i) - z);
      acc += g.conjugate() * (data.samples[i] * w);
    }
    grid.values.col(j) = acc;
  }
  std::ostringstream label;
  label << "backpropagation omega=" << data.omega << " radius=" << data.radius
        << " sensors=" << n;
  grid.provenance = label.str();
}

std::vector<ImageGrid> mode_images(const NpSpectrum& spectrum,
                                   const BoundaryMesh& mesh,
                                   const DrudeMedium& medium, double omega,
                                   double radius, int n_sensors,
                                   const ImageGrid& grid, int n_modes) {
  if (n_modes < 1 || n_modes > spectrum.n_modes())
    throw std::invalid_argument("mode_images: n_modes out of range");
  const Wavenumber k_m = background_wavenumber(medium, omega);
  FarFieldData data;
  data.omega = omega;
  data.radius = radius;
  data.sensors = sensor_ring(radius, n_sensors);
  data.samples.resize(n_sensors);
  std::vector<ImageGrid> images;
  images.reserve(static_cast<std::size_t>(n_modes));
  for (int n = 1; n <= n_modes; ++n) {
    for (int i = 0; i < n_sensors; ++i)
      data.samples[i] =
          mode_field(spectrum, mesh, k_m, n, data.sensors.col(i)).value;
    ImageGrid image = grid;
    backpropagate(data, medium, image);
    images.push_back(std::move(image));
  }
  return images;
}

Eigen::Matrix2cd psf_quadrature(const PsfKernel& psf, const Eigen::Vector2d& y,
                                const Eigen::Vector2d& z) {
  if (!(psf.k_m > 0.0) || !(psf.radius > 0.0) || psf.n_sensors < 2)
    throw std::invalid_argument("psf_quadrature: bad parameters");
  const Wavenumber k(psf.k_m);
  const Eigen::Matrix2Xd sensors = sensor_ring(psf.radius, psf.n_sensors);
  const double w = kTwoPi * psf.radius / psf.n_sensors;
  Eigen::Matrix2cd acc = Eigen::Matrix2cd::Zero();
  for (int i = 0; i < psf.n_sensors; ++i) {
    const Eigen::Vector2cd gy = -grad_gamma(k, sensors.col(i) - y);
    const Eigen::Vector2cd gz = -grad_gamma(k, sensors.col(i) - z);
    acc += gy.conjugate() * gz.transpose() * w;
  }
  return acc;
}

Eigen::Matrix2d psf_closed(double k_m, const Eigen::Vector2d& y,
                           const Eigen::Vector2d& z) {
  if (!(k_m > 0.0)) throw std::invalid_argument("psf_closed: k must be positive");
  const Eigen::Vector2d v = y - z;
  const double r = v.norm();
  const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
  if (k_m * r < 1e-6) return (k_m / 8.0) * id;
  const Eigen::Vector2d vhat = v / r;
  const Eigen::Matrix2d proj = vhat * vhat.transpose();
  const double j0 = bessel::j0(k_m * r);
  const double j1r = bessel::j1(k_m * r) / r;
  return 0.25 * ((k_m * j0 - 2.0 * j1r) * proj + j1r * id);
}

}  // namespace mirage
