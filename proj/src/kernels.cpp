#include "mirage/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "mirage/bessel.hpp"

namespace mirage {

namespace {

constexpr double kPi = 3.14159265358979323846264338;

double radius_checked(const Eigen::Vector2d& x) {
  const double r = x.norm();
  if (!(r > 0.0))
    throw std::invalid_argument("kernels: evaluation point must be nonzero");
  return r;
}

// H_0^{(1)} and H_1^{(1)} at k*r, on the real fast path when Im k = 0.
void hankel_pair(const Wavenumber& k, double r, cd& h0, cd& h1) {
  if (k.is_real()) {
    const double z = k.k.real() * r;
    h0 = cd(bessel::j0(z), bessel::y0(z));
    h1 = cd(bessel::j1(z), bessel::y1(z));
  } else {
    const cd z = k.k * r;
    h0 = bessel::h0(z);
    h1 = bessel::h1(z);
  }
}

}  // namespace

Wavenumber::Wavenumber(cd value) : k(value) {
  if (std::isnan(value.real()) || std::isnan(value.imag()))
    throw std::invalid_argument("Wavenumber: NaN");
  if (value != cd(0.0) && (value.real() < 0.0 || value.imag() < 0.0))
    throw std::invalid_argument(
        "Wavenumber: need Re k >= 0 and Im k >= 0 (outgoing convention)");
}

cd gamma(const Wavenumber& k, const Eigen::Vector2d& x) {
  const double r = radius_checked(x);
  if (k.is_zero()) return cd(std::log(r) / (2.0 * kPi), 0.0);
  cd h0, h1;
  hankel_pair(k, r, h0, h1);
  return cd(0.0, -0.25) * h0;
}

Eigen::Vector2cd grad_gamma(const Wavenumber& k, const Eigen::Vector2d& x) {
  const double r = radius_checked(x);
  if (k.is_zero())
    return (x / (2.0 * kPi * r * r)).cast<cd>();
  cd h0, h1;
  hankel_pair(k, r, h0, h1);
  const cd radial = cd(0.0, 0.25) * k.k * h1 / r;  // dGamma/dr / r
  return radial * x.cast<cd>();
}

Eigen::Matrix2cd hess_gamma(const Wavenumber& k, const Eigen::Vector2d& x) {
  const double r = radius_checked(x);
  const Eigen::Matrix2d proj = x * x.transpose() / (r * r);
  if (k.is_zero()) {
    // (1/2pi) (I - 2 x x^T / r^2) / r^2
    return ((Eigen::Matrix2d::Identity() - 2.0 * proj) / (2.0 * kPi * r * r))
        .cast<cd>();
  }
  cd h0, h1;
  hankel_pair(k, r, h0, h1);
  const cd fp = cd(0.0, 0.25) * k.k * h1;                     // dGamma/dr
  const cd fpp = cd(0.0, 0.25) * k.k * k.k * (h0 - h1 / (k.k * r));
  return fpp * proj.cast<cd>() +
         (fp / r) * (Eigen::Matrix2d::Identity() - proj).cast<cd>();
}

}  // namespace mirage
