#include "mirage/forward.hpp"

#include <cmath>
#include <stdexcept>

namespace mirage {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528677;

void check_source(const DipoleSource& src) {
  if (!(src.omega > 0.0))
    throw std::invalid_argument("DipoleSource: omega must be positive");
  if (!(std::abs(src.moment.norm() - 1.0) < 1e-9))
    throw std::invalid_argument("DipoleSource: moment must be a unit vector");
}

}  // namespace

cd incident_field(const DipoleSource& src, const Wavenumber& k_m,
                  const Eigen::Vector2d& x) {
  const Eigen::Vector2cd g = grad_gamma(k_m, x - src.position);
  return g(0) * src.moment(0) + g(1) * src.moment(1);
}

Eigen::Vector2cd incident_gradient(const DipoleSource& src,
                                   const Wavenumber& k_m,
                                   const Eigen::Vector2d& x) {
  return hess_gamma(k_m, x - src.position) * src.moment.cast<cd>();
}

BiePair solve_transmission(const BoundaryMesh& mesh, const DrudeMedium& medium,
                           const DipoleSource& src) {
  check_source(src);
  const int m = mesh.size();
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  const Wavenumber k_d = particle_wavenumber(medium, src.omega);
  const cd eps_m = medium.eps_m;
  const cd eps_d = drude_epsilon(medium, src.omega);

  const Eigen::MatrixXcd s_m = assemble_single_layer(mesh, k_m).matrix;
  const Eigen::MatrixXcd s_d = assemble_single_layer(mesh, k_d).matrix;
  const Eigen::MatrixXcd k_m_adj = assemble_np_adjoint(mesh, k_m).matrix;
  const Eigen::MatrixXcd k_d_adj = assemble_np_adjoint(mesh, k_d).matrix;
  const Eigen::MatrixXcd half = 0.5 * Eigen::MatrixXcd::Identity(m, m);

  Eigen::MatrixXcd a(2 * m, 2 * m);
  a.topLeftCorner(m, m) = s_m;
  a.topRightCorner(m, m) = -s_d;
  a.bottomLeftCorner(m, m) = (half + k_m_adj) / eps_m;
  a.bottomRightCorner(m, m) = (half - k_d_adj) / eps_d;

  Eigen::VectorXcd b(2 * m);
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d x = mesh.nodes.col(i);
    b[i] = -incident_field(src, k_m, x);
    b[m + i] =
        -mesh.normals.col(i).cast<cd>().dot(incident_gradient(src, k_m, x)) /
        eps_m;
  }

  // The two block rows carry wildly different physical scales (potential vs
  // flux density); equilibrate rows so the factorization and its condition
  // estimate are meaningful.
  for (int i = 0; i < 2 * m; ++i) {
    const double s = a.row(i).cwiseAbs().maxCoeff();
    if (!(s > 0.0)) throw std::runtime_error("solve_transmission: zero row");
    a.row(i) /= s;
    b[i] /= s;
  }

  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(a);
  const Eigen::VectorXcd x = lu.solve(b);

  BiePair out;
  out.exterior = x.head(m);
  out.interior = x.tail(m);
  out.residual = (a * x - b).norm() / b.norm();
  out.rcond = lu.rcond();
  if (!(out.residual < 1e-8))
    throw std::runtime_error("solve_transmission: large linear-system residual");
  return out;
}

Eigen::Matrix2Xd sensor_ring(double radius, int n_sensors) {
  if (!(radius > 0.0) || n_sensors < 1)
    throw std::invalid_argument("sensor_ring: bad parameters");
  Eigen::Matrix2Xd s(2, n_sensors);
  for (int i = 0; i < n_sensors; ++i) {
    const double a = kTwoPi * i / n_sensors;
    s.col(i) = radius * Eigen::Vector2d(std::cos(a), std::sin(a));
  }
  return s;
}

FarFieldData measure(const BoundaryMesh& mesh, const DrudeMedium& medium,
                     const DipoleSource& src, const BiePair& solution,
                     double radius, int n_sensors) {
  check_source(src);
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  FarFieldData data;
  data.omega = src.omega;
  data.radius = radius;
  data.sensors = sensor_ring(radius, n_sensors);
  data.samples.resize(n_sensors);
  for (int i = 0; i < n_sensors; ++i) {
    const Eigen::Vector2d x = data.sensors.col(i);
    data.samples[i] =
        incident_field(src, k_m, x) +
        eval_single_layer(mesh, k_m, solution.exterior, x).value;
  }
  return data;
}

OffBoundaryEval scattered_field(const BoundaryMesh& mesh,
                                const DrudeMedium& medium,
                                const DipoleSource& src,
                                const BiePair& solution,
                                const Eigen::Vector2d& x) {
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  return eval_single_layer(mesh, k_m, solution.exterior, x);
}

OffBoundaryGradEval total_field_gradient(const BoundaryMesh& mesh,
                                         const DrudeMedium& medium,
                                         const DipoleSource& src,
                                         const BiePair& solution,
                                         const Eigen::Vector2d& x) {
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  OffBoundaryGradEval out =
      eval_single_layer_gradient(mesh, k_m, solution.exterior, x);
  out.value += incident_gradient(src, k_m, x);
  return out;
}

Eigen::VectorXcd compute_coupling(const NpSpectrum& spectrum,
                                  const BoundaryMesh& mesh,
                                  const DrudeMedium& medium,
                                  const DipoleSource& src, int n_modes,
                                  const TauCorrection& correction) {
  check_source(src);
  if (n_modes < 1 || n_modes > spectrum.n_modes())
    throw std::invalid_argument("compute_coupling: n_modes out of range");
  const int m = mesh.size();
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  const Wavenumber k_d = particle_wavenumber(medium, src.omega);
  const cd eps_m = medium.eps_m;
  const cd eps_d = drude_epsilon(medium, src.omega);
  const double delta = mesh.curve.spec().scale;

  Eigen::VectorXcd trace(m), flux(m);
  for (int i = 0; i < m; ++i) {
    const Eigen::Vector2d x = mesh.nodes.col(i);
    trace[i] = incident_field(src, k_m, x);
    flux[i] =
        mesh.normals.col(i).cast<cd>().dot(incident_gradient(src, k_m, x));
  }

  const Eigen::MatrixXcd s_d = assemble_single_layer(mesh, k_d).matrix;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s_d);
  if (!(lu.rcond() > 1e-14))
    throw std::runtime_error("compute_coupling: interior single layer near-singular");
  const Eigen::VectorXcd w = lu.solve(trace);
  const Eigen::MatrixXcd k_d_adj = assemble_np_adjoint(mesh, k_d).matrix;

  const Eigen::VectorXcd f =
      -flux / eps_m - (0.5 * w - k_d_adj * w) / eps_d;

  Eigen::VectorXcd alphas(n_modes);
  for (int n = 1; n <= n_modes; ++n) {
    const cd num = hstar_pair(spectrum.metric, f,
                              spectrum.densities.col(n).cast<cd>());
    alphas[n - 1] =
        num / tau_n(spectrum, medium, src.omega, n, delta, correction);
  }
  return alphas;
}

OffBoundaryEval modal_field(const NpSpectrum& spectrum,
                            const BoundaryMesh& mesh,
                            const DrudeMedium& medium, const DipoleSource& src,
                            const Eigen::VectorXcd& alphas,
                            const Eigen::Vector2d& x) {
  check_source(src);
  if (alphas.size() > spectrum.n_modes())
    throw std::invalid_argument("modal_field: more coefficients than modes");
  const Wavenumber k_m = background_wavenumber(medium, src.omega);
  OffBoundaryEval out;
  out.value = incident_field(src, k_m, x);
  for (int n = 1; n <= int(alphas.size()); ++n) {
    const OffBoundaryEval e = mode_field(spectrum, mesh, k_m, n, x);
    out.value += alphas[n - 1] * e.value;
    out.near_boundary = out.near_boundary || e.near_boundary;
  }
  return out;
}

}  // namespace mirage
