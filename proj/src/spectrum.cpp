#include "mirage/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mirage {

namespace {

void check_omega(double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("omega must be positive");
}

// Mirror image of a nodal density under theta -> -theta.  Node j sits at
// theta_j = 2 pi j / m, so the reflection permutes j <-> (m - j) mod m.
Eigen::VectorXd reflect_density(const Eigen::VectorXd& v) {
  const int m = static_cast<int>(v.size());
  Eigen::VectorXd out(m);
  for (int j = 0; j < m; ++j) out[j] = v[(m - j) % m];
  return out;
}

// Rotate the columns of a degenerate cluster to a basis of definite parity
// under theta -> -theta, even columns first.  The rotation is orthogonal, so
// G-orthonormality is preserved.  When the reflection does not map the
// eigenspace to itself (curve without that mirror symmetry) the cluster is
// returned unchanged.
void split_even_odd(const Eigen::MatrixXd& gram, Eigen::MatrixXd& cluster) {
  const int s = static_cast<int>(cluster.cols());
  if (s < 2) return;
  Eigen::MatrixXd reflected(cluster.rows(), s);
  for (int i = 0; i < s; ++i)
    reflected.col(i) = reflect_density(Eigen::VectorXd(cluster.col(i)));
  Eigen::MatrixXd t = cluster.transpose() * gram * reflected;
  // The restricted reflection must be an involution; otherwise bail out.
  if (((t * t) - Eigen::MatrixXd::Identity(s, s)).norm() > 1e-6 * s) return;
  t = 0.5 * (t + t.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> parity(t);
  if (parity.info() != Eigen::Success) return;
  // Ascending eigenvalues put odd (-1) first; flip to get even columns first.
  Eigen::MatrixXd rot = parity.eigenvectors().rowwise().reverse();
  cluster = (cluster * rot).eval();
}

}  // namespace

double DrudeMedium::light_speed() const { return 1.0 / std::sqrt(eps_m * mu_m); }

cd drude_epsilon(const DrudeMedium& medium, double omega) {
  check_omega(omega);
  const cd denom = omega * cd(omega, 1.0 / medium.tau_relax);
  return medium.eps0 * (1.0 - medium.omega_p * medium.omega_p / denom);
}

cd contrast_lambda(const DrudeMedium& medium, double omega) {
  const cd eps_d = drude_epsilon(medium, omega);
  const cd diff = medium.eps_m - eps_d;
  if (std::abs(diff) < 1e-12 * medium.eps0)
    throw std::runtime_error("contrast_lambda: particle matches background");
  return (medium.eps_m + eps_d) / (2.0 * diff);
}

Wavenumber background_wavenumber(const DrudeMedium& medium, double omega) {
  check_omega(omega);
  return Wavenumber(omega * std::sqrt(medium.eps_m * medium.mu_m));
}

Wavenumber particle_wavenumber(const DrudeMedium& medium, double omega) {
  // Principal square root keeps Re k >= 0; the Drude loss puts Im k > 0.
  return Wavenumber(omega * std::sqrt(drude_epsilon(medium, omega) * medium.mu_m));
}

Eigen::VectorXd equilibrium_density(const BoundaryMesh& mesh,
                                    const BoundaryOperator& np_adjoint_static) {
  const int m = mesh.size();
  if (np_adjoint_static.mesh_size != m)
    throw std::invalid_argument("equilibrium_density: mesh size mismatch");
  if (np_adjoint_static.tag != KernelTag::np_adjoint ||
      !np_adjoint_static.k.is_zero())
    throw std::invalid_argument("equilibrium_density: need the static NP adjoint");

  const Eigen::MatrixXd k_mat = np_adjoint_static.matrix.real();
  Eigen::EigenSolver<Eigen::MatrixXd> solver(k_mat);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("equilibrium_density: eigensolver failed");

  int best = -1;
  double best_err = 1e300;
  for (int i = 0; i < m; ++i) {
    const double err = std::abs(solver.eigenvalues()[i] - cd(0.5, 0.0));
    if (err < best_err) {
      best_err = err;
      best = i;
    }
  }
  if (best_err > 1e-6)
    throw std::runtime_error(
        "equilibrium_density: no eigenvalue within 1e-6 of 1/2");

  Eigen::VectorXd phi = solver.eigenvectors().col(best).real();
  const double mass = mesh.weights.dot(phi);
  if (std::abs(mass) < 1e-14 * phi.norm())
    throw std::runtime_error("equilibrium_density: eigendensity has zero mass");
  return phi / mass;
}

NpSpectrum eig_np(const BoundaryMesh& mesh,
                  const BoundaryOperator& np_adjoint_static,
                  const HStarMetric& metric, int n_modes) {
  const int m = mesh.size();
  if (np_adjoint_static.mesh_size != m || metric.mesh_size != m)
    throw std::invalid_argument("eig_np: mesh size mismatch");
  if (n_modes < 1 || n_modes > m - 1)
    throw std::invalid_argument("eig_np: n_modes out of range");

  NpSpectrum out;
  out.mesh_size = m;
  out.metric = metric;

  const Eigen::MatrixXd k_mat = np_adjoint_static.matrix.real();
  Eigen::MatrixXd a = metric.gram * k_mat;
  a = 0.5 * (a + a.transpose()).eval();

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, metric.gram);
  if (solver.info() == Eigen::Success) {
    values = solver.eigenvalues();
    vectors = solver.eigenvectors();   // G-orthonormal columns
  } else {
    // Fallback: plain eigensolve, then normalize in the metric.  Spurious
    // imaginary parts below 1e-6 are truncated, larger ones are an error.
    out.warnings.push_back("generalized eigensolver failed; using fallback");
    Eigen::EigenSolver<Eigen::MatrixXd> plain(k_mat);
    if (plain.info() != Eigen::Success)
      throw std::runtime_error("eig_np: fallback eigensolver failed");
    values.resize(m);
    vectors.resize(m, m);
    for (int i = 0; i < m; ++i) {
      if (std::abs(plain.eigenvalues()[i].imag()) > 1e-6)
        throw std::runtime_error("eig_np: eigenvalue has a large imaginary part");
      values[i] = plain.eigenvalues()[i].real();
      Eigen::VectorXd v = plain.eigenvectors().col(i).real();
      const double norm2 = v.dot(metric.gram * v);
      if (!(norm2 > 0.0))
        throw std::runtime_error("eig_np: fallback vector has nonpositive energy");
      vectors.col(i) = v / std::sqrt(norm2);
    }
  }

  // Locate the accumulation eigenvalue 1/2.
  int idx0 = -1;
  double err0 = 1e300;
  for (int i = 0; i < m; ++i) {
    const double err = std::abs(values[i] - 0.5);
    if (err < err0) {
      err0 = err;
      idx0 = i;
    }
  }
  if (err0 > 1e-6)
    throw std::runtime_error("eig_np: no eigenvalue within 1e-6 of 1/2");

  // Remaining modes: descending |lambda|, with |lambda| ties resolved
  // deterministically.  A tie group is split into its negative and positive
  // twins; each twin cluster that is itself degenerate is rotated to an
  // (even, odd) parity basis; finally the twins are interleaved as
  // (-even, +even, -odd, +odd) so twin modes of the same spatial type sit
  // next to each other.
  std::vector<int> order;
  order.reserve(m - 1);
  for (int i = 0; i < m; ++i)
    if (i != idx0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a_i, int b_i) {
    const double ma = std::abs(values[a_i]), mb = std::abs(values[b_i]);
    if (std::abs(ma - mb) > 1e-9) return ma > mb;
    return values[a_i] < values[b_i];
  });

  std::vector<double> final_values;
  std::vector<Eigen::VectorXd> final_vectors;
  final_values.reserve(m - 1);
  final_vectors.reserve(m - 1);

  std::size_t g = 0;
  while (g < order.size() && static_cast<int>(final_values.size()) < n_modes) {
    // Collect one |lambda| tie group.
    std::size_t g_end = g + 1;
    const double head = std::abs(values[order[g]]);
    while (g_end < order.size() &&
           std::abs(std::abs(values[order[g_end]]) - head) <=
               std::max(1e-9, 1e-6 * head))
      ++g_end;

    // Split into the negative and positive twins (the sort already placed
    // negatives first inside the group).
    std::vector<int> neg, pos;
    for (std::size_t i = g; i < g_end; ++i)
      (values[order[i]] < 0.0 ? neg : pos).push_back(order[i]);

    auto canonicalize = [&](const std::vector<int>& idx)
        -> std::vector<Eigen::VectorXd> {
      std::vector<Eigen::VectorXd> cols;
      // Rotate only a genuinely degenerate cluster of a nonzero eigenvalue;
      // for the near-null cluster of a disk the basis is numerical noise and
      // any choice is as good as another.
      bool tight = idx.size() >= 2 && head > 1e-8;
      for (std::size_t i = 1; i < idx.size() && tight; ++i)
        tight = std::abs(values[idx[i]] - values[idx[0]]) <=
                std::max(1e-12, 1e-8 * head);
      if (tight) {
        Eigen::MatrixXd cluster(m, idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
          cluster.col(static_cast<int>(i)) = vectors.col(idx[i]);
        split_even_odd(metric.gram, cluster);
        for (int i = 0; i < cluster.cols(); ++i)
          cols.push_back(cluster.col(i));
      } else {
        for (int i : idx) cols.push_back(vectors.col(i));
      }
      return cols;
    };

    const std::vector<Eigen::VectorXd> neg_cols = canonicalize(neg);
    const std::vector<Eigen::VectorXd> pos_cols = canonicalize(pos);

    const std::size_t rounds = std::max(neg_cols.size(), pos_cols.size());
    for (std::size_t i = 0; i < rounds; ++i) {
      if (i < neg_cols.size()) {
        final_values.push_back(values[neg[i]]);
        final_vectors.push_back(neg_cols[i]);
      }
      if (i < pos_cols.size()) {
        final_values.push_back(values[pos[i]]);
        final_vectors.push_back(pos_cols[i]);
      }
    }
    g = g_end;
  }

  if (static_cast<int>(final_values.size()) < n_modes)
    throw std::runtime_error("eig_np: fewer modes than requested");

  out.eigenvalues.resize(n_modes + 1);
  out.densities.resize(m, n_modes + 1);
  out.eigenvalues[0] = values[idx0];
  out.densities.col(0) = metric.phi0;
  for (int n = 1; n <= n_modes; ++n) {
    const double lam = final_values[n - 1];
    if (!(lam > -0.5 - 1e-4 && lam < 0.5 + 1e-4))
      throw std::runtime_error("eig_np: eigenvalue outside (-1/2, 1/2)");
    out.eigenvalues[n] = lam;
    Eigen::VectorXd v = final_vectors[n - 1];
    // Canonical sign: largest-magnitude entry positive.
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    out.densities.col(n) = v;
  }
  return out;
}

NpSpectrum build_spectrum(const BoundaryMesh& mesh, int n_modes) {
  const BoundaryOperator s0 = assemble_single_layer(mesh, Wavenumber());
  const BoundaryOperator k0 = assemble_np_adjoint(mesh, Wavenumber());
  const Eigen::VectorXd phi0 = equilibrium_density(mesh, k0);
  const BoundaryOperator st = assemble_s_tilde(mesh, s0, phi0);
  const HStarMetric metric = make_hstar_metric(mesh, st, phi0);
  return eig_np(mesh, k0, metric, n_modes);
}

cd tau_n(const NpSpectrum& spectrum, const DrudeMedium& medium, double omega,
         int n, double delta, const TauCorrection& correction) {
  if (n < 0 || n > spectrum.n_modes())
    throw std::invalid_argument("tau_n: mode index out of range");
  if (!(delta > 0.0)) throw std::invalid_argument("tau_n: delta must be positive");
  const cd eps_d = drude_epsilon(medium, omega);
  const cd lead = (1.0 / eps_d - 1.0 / medium.eps_m) *
                  (contrast_lambda(medium, omega) - spectrum.eigenvalues[n]);
  if (!correction) return lead;
  const double s = omega * delta / medium.light_speed();
  return lead + s * s * std::log(s) * correction(n);
}

ResonanceTable find_resonances(const NpSpectrum& spectrum,
                               const DrudeMedium& medium, double omega_lo,
                               double omega_hi, double delta,
                               const TauCorrection& correction) {
  if (!(omega_lo > 0.0) || !(omega_hi > omega_lo))
    throw std::invalid_argument("find_resonances: bad frequency range");
  ResonanceTable table;
  for (int n = 1; n <= spectrum.n_modes(); ++n) {
    const double lam = spectrum.eigenvalues[n];
    // The accumulation value 1/2 never resonates (tau_0 = 1/eps_m exactly);
    // treat anything pinned at the endpoint the same way.
    if (lam >= 0.5 - 1e-9) {
      table.omitted.push_back(n);
      continue;
    }
    auto f = [&](double w) {
      return contrast_lambda(medium, w).real() - lam;
    };
    double lo = omega_lo, hi = omega_hi;
    if (f(lo) > 0.0 || f(hi) < 0.0) {
      table.omitted.push_back(n);   // no sign change on the monotone branch
      continue;
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-9 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) <= 0.0 ? lo : hi) = mid;
    }
    const double w = 0.5 * (lo + hi);
    table.entries.push_back(
        {n, w, std::abs(tau_n(spectrum, medium, w, n, delta, correction))});
  }
  return table;
}

OffBoundaryEval mode_field(const NpSpectrum& spectrum, const BoundaryMesh& mesh,
                           const Wavenumber& k_m, int n,
                           const Eigen::Vector2d& x) {
  if (n < 0 || n > spectrum.n_modes())
    throw std::invalid_argument("mode_field: mode index out of range");
  if (spectrum.mesh_size != mesh.size())
    throw std::invalid_argument("mode_field: mesh size mismatch");
  return eval_single_layer(mesh, k_m, spectrum.densities.col(n).cast<cd>(), x);
}

}  // namespace mirage
