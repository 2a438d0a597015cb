#include "mirage/bessel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mirage::bessel {

namespace {

using cd = std::complex<double>;

constexpr double kEulerGamma = 0.57721566490153286060651209;
constexpr double kPi = 3.14159265358979323846264338;
// Series/asymptotic crossover.  At |z| = 13 the alternating series loses
// ~5 digits to cancellation and the optimally truncated asymptotic series
// bottoms out near exp(-2|z|); both sit around 1e-11 relative.
constexpr double kSeriesRadius = 13.0;
constexpr int kMaxSeriesTerms = 64;

template <typename T>
T j0_series(T z) {
  const T q = 0.25 * z * z;
  T term(1.0), sum(1.0);
  for (int m = 1; m < kMaxSeriesTerms; ++m) {
    term *= -q / double(m * m);
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

template <typename T>
T j1_series(T z) {
  const T q = 0.25 * z * z;
  T term = 0.5 * z;
  T sum = term;
  for (int m = 1; m < kMaxSeriesTerms; ++m) {
    term *= -q / double(m * (m + 1));
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

// log(z/2) + gamma_E, with the principal branch for complex z.
cd log_half(cd z) { return std::log(0.5 * z) + kEulerGamma; }
double log_half(double x) { return std::log(0.5 * x) + kEulerGamma; }

template <typename T>
T y0_series(T z) {
  const T q = 0.25 * z * z;
  T term(1.0);   // q^m / (m!)^2
  T sum(0.0);
  double harmonic = 0.0;
  for (int m = 1; m < kMaxSeriesTerms; ++m) {
    term *= -q / double(m * m);
    harmonic += 1.0 / m;
    // Series carries (-1)^{m+1} H_m q^m/(m!)^2; `term` already alternates.
    sum -= harmonic * term;
    if (std::abs(term) < 1e-18) break;
  }
  return (2.0 / kPi) * (log_half(z) * j0_series(z) + sum);
}

template <typename T>
T y1_series(T z) {
  const T q = 0.25 * z * z;
  T term(1.0);   // q^m / (m!(m+1)!)
  double h_m = 0.0, h_m1 = 1.0;
  T sum = T(h_m + h_m1);
  for (int m = 1; m < kMaxSeriesTerms; ++m) {
    term *= -q / double(m * (m + 1));
    h_m += 1.0 / m;
    h_m1 += 1.0 / (m + 1);
    sum += (h_m + h_m1) * term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return (2.0 / kPi) * log_half(z) * j1_series(z) - 2.0 / (kPi * z) -
         z / (2.0 * kPi) * sum;
}

// Hankel asymptotic sum  sum_k (±i)^k a_k(nu) / z^k  truncated at the
// smallest term; valid for |arg z| < pi, which covers Im z >= 0.
cd hankel_asym_sum(int nu, cd z, double sign) {
  const double mu = 4.0 * nu * nu;
  cd term(1.0), sum(1.0);
  double prev = std::numeric_limits<double>::max();
  const cd rot = cd(0.0, sign);
  for (int k = 1; k < 40; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= rot * (mu - odd * odd) / (8.0 * k) / z;
    const double mag = std::abs(term);
    if (mag >= prev) break;  // divergent tail reached
    sum += term;
    prev = mag;
    if (mag < 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

cd hankel1_asym(int nu, cd z) {
  const cd phase = z - (0.5 * nu + 0.25) * kPi;
  return std::sqrt(2.0 / (kPi * z)) * std::exp(cd(0, 1) * phase) *
         hankel_asym_sum(nu, z, +1.0);
}

cd hankel2_asym(int nu, cd z) {
  const cd phase = z - (0.5 * nu + 0.25) * kPi;
  return std::sqrt(2.0 / (kPi * z)) * std::exp(cd(0, -1) * phase) *
         hankel_asym_sum(nu, z, -1.0);
}

void check_domain(cd z) {
  if (z == cd(0.0) || std::isnan(z.real()) || std::isnan(z.imag()))
    throw std::invalid_argument("bessel: argument must be nonzero and finite");
  if (z.imag() < 0.0)
    throw std::invalid_argument("bessel: argument must satisfy Im z >= 0");
}

}  // namespace

cd j0(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius) return j0_series(z);
  return 0.5 * (hankel1_asym(0, z) + hankel2_asym(0, z));
}

cd j1(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius) return j1_series(z);
  return 0.5 * (hankel1_asym(1, z) + hankel2_asym(1, z));
}

cd y0(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius) return y0_series(z);
  return cd(0, -0.5) * (hankel1_asym(0, z) - hankel2_asym(0, z));
}

cd y1(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius) return y1_series(z);
  return cd(0, -0.5) * (hankel1_asym(1, z) - hankel2_asym(1, z));
}

cd h0(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius)
    return j0_series(z) + cd(0, 1) * y0_series(z);
  return hankel1_asym(0, z);
}

cd h1(cd z) {
  check_domain(z);
  if (std::abs(z) <= kSeriesRadius)
    return j1_series(z) + cd(0, 1) * y1_series(z);
  return hankel1_asym(1, z);
}

double j0(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("bessel: need x > 0");
  if (x <= kSeriesRadius) return j0_series(x);
  return hankel1_asym(0, cd(x)).real();
}

double j1(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("bessel: need x > 0");
  if (x <= kSeriesRadius) return j1_series(x);
  return hankel1_asym(1, cd(x)).real();
}

double y0(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("bessel: need x > 0");
  if (x <= kSeriesRadius) return y0_series(x);
  return hankel1_asym(0, cd(x)).imag();
}

double y1(double x) {
  if (!(x > 0.0)) throw std::invalid_argument("bessel: need x > 0");
  if (x <= kSeriesRadius) return y1_series(x);
  return hankel1_asym(1, cd(x)).imag();
}

}  // namespace mirage::bessel
