#include "mirage/potentials.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "mirage/bessel.hpp"

namespace mirage {

namespace {

constexpr double kPi = 3.14159265358979323846264338;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kEulerGamma = 0.57721566490153286060651209;

// ln(4 sin^2((t-s)/2)) evaluated once per node pair.
double log_factor(double dt) {
  const double s = 2.0 * std::sin(0.5 * dt);
  return std::log(s * s);
}

void require_same_mesh(int a, int b, const char* where) {
  if (a != b) throw std::invalid_argument(std::string(where) + ": mesh size mismatch");
}

}  // namespace

Eigen::VectorXd kress_log_weights(int M) {
  if (M < 4 || M % 2 != 0)
    throw std::invalid_argument("kress_log_weights: M must be even and >= 4");
  const int n = M / 2;
  Eigen::VectorXd r(M);
  for (int d = 0; d < M; ++d) {
    double sum = 0.0;
    for (int m = 1; m < n; ++m) sum += std::cos(m * d * kPi / n) / m;
    r[d] = -kTwoPi / n * sum - (d % 2 == 0 ? 1.0 : -1.0) * kPi / (n * n);
  }
  return r;
}

double kress_log_weight(int M, double t_diff) {
  const int n = M / 2;
  double sum = 0.0;
  for (int m = 1; m < n; ++m) sum += std::cos(m * t_diff) / m;
  return -kTwoPi / n * sum - kPi / (n * n) * std::cos(n * t_diff);
}

BoundaryOperator assemble_single_layer(const BoundaryMesh& mesh,
                                       const Wavenumber& k) {
  const int m = mesh.size();
  const Eigen::VectorXd r_w = kress_log_weights(m);
  BoundaryOperator op{Eigen::MatrixXcd(m, m), KernelTag::single_layer, k, m};

  // Diagonal of the analytic remainder after the log split:
  // (1/2pi) ln|zeta'| for k = 0, plus (1/2pi)(log(k/2)+gamma) - i/4 else.
  cd diag_shift(0.0, 0.0);
  if (!k.is_zero())
    diag_shift = std::log(0.5 * k.k) / kTwoPi + kEulerGamma / kTwoPi -
                 cd(0.0, 0.25);

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      cd entry;
      if (i == j) {
        const cd smooth = std::log(mesh.jacobians[i]) / kTwoPi + diag_shift;
        entry = r_w[0] * (0.25 / kPi) + mesh.h * smooth;
      } else {
        const Eigen::Vector2d diff = mesh.nodes.col(i) - mesh.nodes.col(j);
        const double lf = log_factor(mesh.theta[i] - mesh.theta[j]);
        cd log_coeff;       // multiplies ln(4 sin^2((t-s)/2))
        if (k.is_zero()) {
          log_coeff = 0.25 / kPi;
        } else {
          log_coeff = 0.25 / kPi * bessel::j0(k.k * diff.norm());
        }
        const cd smooth = gamma(k, diff) - log_coeff * lf;
        entry = r_w[(i - j + m) % m] * log_coeff + mesh.h * smooth;
      }
      op.matrix(i, j) = entry * mesh.jacobians[j];
    }
  }
  return op;
}

namespace {

// Shared assembly of the two NP variants.  `dot_at_row = true` pairs x - y
// with the normal at the collocation node (adjoint); false pairs with the
// normal at the integration node.
BoundaryOperator assemble_np_impl(const BoundaryMesh& mesh, const Wavenumber& k,
                                  bool dot_at_row) {
  const int m = mesh.size();
  const Eigen::VectorXd r_w = kress_log_weights(m);
  BoundaryOperator op{Eigen::MatrixXcd(m, m),
                      dot_at_row ? KernelTag::np_adjoint : KernelTag::np, k, m};

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      cd entry;
      if (i == j) {
        entry = mesh.h * mesh.curvatures[i] / (4.0 * kPi);
      } else {
        const Eigen::Vector2d diff = mesh.nodes.col(i) - mesh.nodes.col(j);
        const double r = diff.norm();
        const double dot = dot_at_row ? diff.dot(mesh.normals.col(i))
                                      : -diff.dot(mesh.normals.col(j));
        if (k.is_zero()) {
          entry = mesh.h * dot / (kTwoPi * r * r);
        } else {
          const cd full = cd(0.0, 0.25) * k.k * bessel::h1(k.k * r) * dot / r;
          const cd log_coeff = -k.k / (4.0 * kPi) * bessel::j1(k.k * r) * dot / r;
          const double lf = log_factor(mesh.theta[i] - mesh.theta[j]);
          entry = r_w[(i - j + m) % m] * log_coeff +
                  mesh.h * (full - log_coeff * lf);
        }
      }
      op.matrix(i, j) = entry * mesh.jacobians[j];
    }
  }
  return op;
}

}  // namespace

BoundaryOperator assemble_np_adjoint(const BoundaryMesh& mesh,
                                     const Wavenumber& k) {
  return assemble_np_impl(mesh, k, true);
}

BoundaryOperator assemble_np(const BoundaryMesh& mesh, const Wavenumber& k) {
  return assemble_np_impl(mesh, k, false);
}

BoundaryOperator assemble_s_tilde(const BoundaryMesh& mesh,
                                  const BoundaryOperator& s_static,
                                  const Eigen::VectorXd& phi0) {
  const int m = mesh.size();
  require_same_mesh(s_static.mesh_size, m, "assemble_s_tilde");
  if (s_static.tag != KernelTag::single_layer || !s_static.k.is_zero())
    throw std::invalid_argument("assemble_s_tilde: need the static single layer");
  if (phi0.size() != m)
    throw std::invalid_argument("assemble_s_tilde: phi0 size mismatch");
  const double mass = mesh.weights.dot(phi0);
  if (std::abs(mass - 1.0) > 1e-8)
    throw std::invalid_argument("assemble_s_tilde: phi0 must have unit mass");

  // S~ v = S[v - <v,1> phi0] - <v,1> 1.
  const Eigen::RowVectorXd q = mesh.weights.transpose();
  Eigen::MatrixXcd st = s_static.matrix;
  st -= (s_static.matrix * phi0) * q.cast<cd>();
  st -= Eigen::VectorXcd::Ones(m) * q.cast<cd>();
  return BoundaryOperator{std::move(st), KernelTag::s_tilde, Wavenumber(), m};
}

cd eta_k(const Wavenumber& k) {
  if (k.is_zero()) throw std::invalid_argument("eta_k: k must be nonzero");
  return (std::log(k.k) + kEulerGamma - std::log(2.0)) / kTwoPi - cd(0.0, 0.25);
}

BoundaryOperator assemble_s_hat(const BoundaryMesh& mesh, const Wavenumber& k) {
  BoundaryOperator op = assemble_single_layer(mesh, Wavenumber());
  op.matrix += eta_k(k) * Eigen::VectorXcd::Ones(mesh.size()) *
               mesh.weights.transpose().cast<cd>();
  op.tag = KernelTag::s_hat;
  op.k = k;
  return op;
}

HStarMetric make_hstar_metric(const BoundaryMesh& mesh,
                              const BoundaryOperator& s_tilde,
                              const Eigen::VectorXd& phi0) {
  const int m = mesh.size();
  require_same_mesh(s_tilde.mesh_size, m, "make_hstar_metric");
  if (s_tilde.tag != KernelTag::s_tilde)
    throw std::invalid_argument("make_hstar_metric: need an s_tilde operator");

  Eigen::MatrixXd g = -(mesh.weights.asDiagonal() * s_tilde.matrix).real();
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff() /
                      g.cwiseAbs().maxCoeff();
  g = 0.5 * (g + g.transpose()).eval();

  // The form must be positive definite; a failed factorization signals a bad
  // equilibrium density or a mesh too coarse for the curve.
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("make_hstar_metric: Gram matrix not positive definite");

  return HStarMetric{std::move(g), phi0, m, asym};
}

cd hstar_inner(const HStarMetric& metric, const Eigen::VectorXcd& u,
               const Eigen::VectorXcd& v) {
  require_same_mesh(int(u.size()), metric.mesh_size, "hstar_inner");
  require_same_mesh(int(v.size()), metric.mesh_size, "hstar_inner");
  return u.dot(metric.gram * v);  // Eigen's dot conjugates the first factor
}

cd hstar_pair(const HStarMetric& metric, const Eigen::VectorXcd& u,
              const Eigen::VectorXcd& v) {
  require_same_mesh(int(u.size()), metric.mesh_size, "hstar_pair");
  require_same_mesh(int(v.size()), metric.mesh_size, "hstar_pair");
  return u.transpose() * (metric.gram * v);
}

OffBoundaryEval eval_single_layer(const BoundaryMesh& mesh, const Wavenumber& k,
                                  const Eigen::VectorXcd& density,
                                  const Eigen::Vector2d& x) {
  require_same_mesh(int(density.size()), mesh.size(), "eval_single_layer");
  OffBoundaryEval out;
  out.near_boundary = node_distance(mesh, x) < offboundary_guard(mesh, x);
  for (int j = 0; j < mesh.size(); ++j)
    out.value += gamma(k, x - Eigen::Vector2d(mesh.nodes.col(j))) *
                 density[j] * mesh.weights[j];
  return out;
}

OffBoundaryGradEval eval_single_layer_gradient(const BoundaryMesh& mesh,
                                               const Wavenumber& k,
                                               const Eigen::VectorXcd& density,
                                               const Eigen::Vector2d& x) {
  require_same_mesh(int(density.size()), mesh.size(), "eval_single_layer_gradient");
  OffBoundaryGradEval out;
  out.near_boundary = node_distance(mesh, x) < offboundary_guard(mesh, x);
  for (int j = 0; j < mesh.size(); ++j)
    out.value += grad_gamma(k, x - Eigen::Vector2d(mesh.nodes.col(j))) *
                 (density[j] * mesh.weights[j]);
  return out;
}

cd boundary_eval_single_layer(const BoundaryMesh& mesh, const Wavenumber& k,
                              const Eigen::VectorXcd& density, double t) {
  require_same_mesh(int(density.size()), mesh.size(), "boundary_eval_single_layer");
  const int m = mesh.size();
  const Eigen::Vector2d x = mesh.curve.position(t);
  const double jac_t = mesh.curve.jacobian(t);

  cd acc(0.0, 0.0);
  cd diag_shift(0.0, 0.0);
  if (!k.is_zero())
    diag_shift = std::log(0.5 * k.k) / kTwoPi + kEulerGamma / kTwoPi -
                 cd(0.0, 0.25);

  for (int j = 0; j < m; ++j) {
    const double dt = t - mesh.theta[j];
    const double rw = kress_log_weight(m, dt);
    cd entry;
    if (std::abs(std::remainder(dt, kTwoPi)) < 1e-12) {
      const cd smooth = std::log(jac_t) / kTwoPi + diag_shift;
      entry = rw * (0.25 / kPi) + mesh.h * smooth;
    } else {
      const Eigen::Vector2d diff = x - Eigen::Vector2d(mesh.nodes.col(j));
      const cd log_coeff = k.is_zero()
                               ? cd(0.25 / kPi, 0.0)
                               : cd(0.25 / kPi) * bessel::j0(k.k * diff.norm());
      const cd smooth = gamma(k, diff) - log_coeff * log_factor(dt);
      entry = rw * log_coeff + mesh.h * smooth;
    }
    acc += entry * mesh.jacobians[j] * density[j];
  }
  return acc;
}

void dump_operator(const BoundaryOperator& op, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dump_operator: cannot open " + path);
  const char magic[4] = {'M', 'B', 'O', '1'};
  f.write(magic, 4);
  const std::int32_t m = op.mesh_size;
  const std::int32_t tag = static_cast<std::int32_t>(op.tag);
  const double kk[2] = {op.k.k.real(), op.k.k.imag()};
  f.write(reinterpret_cast<const char*>(&m), sizeof m);
  f.write(reinterpret_cast<const char*>(&tag), sizeof tag);
  f.write(reinterpret_cast<const char*>(kk), sizeof kk);
  f.write(reinterpret_cast<const char*>(op.matrix.data()),
          sizeof(cd) * op.matrix.size());
  if (!f) throw std::runtime_error("dump_operator: write failed for " + path);
}

BoundaryOperator load_operator(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_operator: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "MBO1")
    throw std::runtime_error("load_operator: bad header in " + path);
  std::int32_t m = 0, tag = 0;
  double kk[2];
  f.read(reinterpret_cast<char*>(&m), sizeof m);
  f.read(reinterpret_cast<char*>(&tag), sizeof tag);
  f.read(reinterpret_cast<char*>(kk), sizeof kk);
  if (!f || m <= 0) throw std::runtime_error("load_operator: bad metadata");
  BoundaryOperator op;
  op.mesh_size = m;
  op.tag = static_cast<KernelTag>(tag);
  op.k = (kk[0] == 0.0 && kk[1] == 0.0) ? Wavenumber()
                                        : Wavenumber(cd(kk[0], kk[1]));
  op.matrix.resize(m, m);
  f.read(reinterpret_cast<char*>(op.matrix.data()), sizeof(cd) * op.matrix.size());
  if (!f) throw std::runtime_error("load_operator: truncated file " + path);
  return op;
}

}  // namespace mirage
