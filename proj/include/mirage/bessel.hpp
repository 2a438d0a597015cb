#pragma once

#include <complex>

namespace mirage::bessel {

// Cylinder functions of order 0 and 1 for complex arguments in the closed
// upper half plane (Im z >= 0, z != 0), which is where lossy-medium
// wavenumbers live.  A power series is used below |z| = 13 and the Hankel
// asymptotic expansion above it; the crossover keeps the relative error of
// the Hankel values near 1e-11 across 1e-3 <= |z| <= 1e3 (see unit tests,
// which compare against an independent reference).
std::complex<double> j0(std::complex<double> z);
std::complex<double> j1(std::complex<double> z);
std::complex<double> y0(std::complex<double> z);
std::complex<double> y1(std::complex<double> z);
std::complex<double> h0(std::complex<double> z);  // H_0^{(1)} = J_0 + i Y_0
std::complex<double> h1(std::complex<double> z);  // H_1^{(1)} = J_1 + i Y_1

// Real-argument fast paths (x > 0).  Same accuracy as the complex versions;
// used by the hot imaging loops.
double j0(double x);
double j1(double x);
double y0(double x);
double y1(double x);

}  // namespace mirage::bessel
