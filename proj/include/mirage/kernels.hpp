#pragma once

#include <Eigen/Dense>
#include <complex>

namespace mirage {

using cd = std::complex<double>;

// Wavenumber of a (possibly lossy) homogeneous medium.  k = 0 selects the
// static (log-potential) branch of the fundamental solution; otherwise
// Re k >= 0 and Im k >= 0 are required so that outgoing waves decay.
struct Wavenumber {
  cd k{0.0, 0.0};

  Wavenumber() = default;
  explicit Wavenumber(cd value);
  explicit Wavenumber(double value) : Wavenumber(cd(value, 0.0)) {}

  bool is_zero() const { return k == cd(0.0, 0.0); }
  bool is_real() const { return k.imag() == 0.0; }
};

// Outgoing fundamental solution of the 2-D Helmholtz operator (log potential
// for k = 0), its gradient and Hessian in the first argument of
// x |-> Gamma^k(x).  For a two-point kernel Gamma^k(x, y) pass x - y.
cd gamma(const Wavenumber& k, const Eigen::Vector2d& x);
Eigen::Vector2cd grad_gamma(const Wavenumber& k, const Eigen::Vector2d& x);
Eigen::Matrix2cd hess_gamma(const Wavenumber& k, const Eigen::Vector2d& x);

}  // namespace mirage
