#pragma once

#include <string>

#include "mirage/geometry.hpp"
#include "mirage/kernels.hpp"

namespace mirage {

// Dense Nystrom discretizations of the boundary integral operators on a
// uniformly sampled closed curve.  Matrices act on nodal density values and
// return nodal values of the transformed density.
enum class KernelTag { single_layer, np_adjoint, np, s_tilde, s_hat };

struct BoundaryOperator {
  Eigen::MatrixXcd matrix;
  KernelTag tag = KernelTag::single_layer;
  Wavenumber k;
  int mesh_size = 0;
};

// Product-quadrature weights for the periodic logarithm: with M = 2n uniform
// nodes, integral of ln(4 sin^2((t-s)/2)) f(s) ds over one period is
// approximated by sum_j R_{(i-j) mod M} f(t_j) at collocation node t_i.
// The rule integrates trigonometric polynomials of degree < n exactly.
Eigen::VectorXd kress_log_weights(int M);
// Same weight evaluated at an arbitrary collocation offset t - t_j.
double kress_log_weight(int M, double t_diff);

// Single layer operator with kernel Gamma^k(x - y); the logarithmic part is
// handled by the product quadrature above, the analytic remainder by the
// trapezoid rule, so convergence is spectral on analytic curves.
BoundaryOperator assemble_single_layer(const BoundaryMesh& mesh,
                                       const Wavenumber& k);

// Neumann-Poincare adjoint: kernel dGamma^k(x-y)/dnu(x).  For k = 0 the
// kernel is analytic with diagonal value kappa(x)/(4 pi).
BoundaryOperator assemble_np_adjoint(const BoundaryMesh& mesh,
                                     const Wavenumber& k);

// Non-adjoint companion: kernel dGamma^k(x-y)/dnu(y).
BoundaryOperator assemble_np(const BoundaryMesh& mesh, const Wavenumber& k);

// Invertible substitute for the static single layer: agrees with S on
// mean-free densities and maps the equilibrium density phi0 to -1.
// phi0 must satisfy <phi0, 1> = 1 (see spectrum::equilibrium_density).
BoundaryOperator assemble_s_tilde(const BoundaryMesh& mesh,
                                  const BoundaryOperator& s_static,
                                  const Eigen::VectorXd& phi0);

// Low-frequency surrogate S + eta_k <.,1>: the k -> 0 limit of the single
// layer keeps this rank-one log(k) correction.
BoundaryOperator assemble_s_hat(const BoundaryMesh& mesh, const Wavenumber& k);
cd eta_k(const Wavenumber& k);

// Energy inner product in which the static NP adjoint is self-adjoint:
// <u,v> = -<S~[v], u> realized as the Gram matrix G = -(W S~), W = diag(w).
struct HStarMetric {
  Eigen::MatrixXd gram;       // symmetric positive definite
  Eigen::VectorXd phi0;
  int mesh_size = 0;
  double asymmetry = 0.0;     // relative asymmetry before symmetrization
};

HStarMetric make_hstar_metric(const BoundaryMesh& mesh,
                              const BoundaryOperator& s_tilde,
                              const Eigen::VectorXd& phi0);

// Sesquilinear form u^H G v (use for norms and orthogonality).
cd hstar_inner(const HStarMetric& metric, const Eigen::VectorXcd& u,
               const Eigen::VectorXcd& v);
// Bilinear form u^T G v (use to pair a complex density with a real mode).
cd hstar_pair(const HStarMetric& metric, const Eigen::VectorXcd& u,
              const Eigen::VectorXcd& v);

// Off-boundary potential evaluation by the trapezoid rule.  Within five
// local node spacings of the curve the quadrature loses digits; the flag
// reports that so callers can refine or mask.
struct OffBoundaryEval {
  cd value{0.0, 0.0};
  bool near_boundary = false;
};

OffBoundaryEval eval_single_layer(const BoundaryMesh& mesh, const Wavenumber& k,
                                  const Eigen::VectorXcd& density,
                                  const Eigen::Vector2d& x);

struct OffBoundaryGradEval {
  Eigen::Vector2cd value{cd(0, 0), cd(0, 0)};
  bool near_boundary = false;
};

OffBoundaryGradEval eval_single_layer_gradient(const BoundaryMesh& mesh,
                                               const Wavenumber& k,
                                               const Eigen::VectorXcd& density,
                                               const Eigen::Vector2d& x);

// On-curve evaluation of the single layer at an arbitrary parameter value,
// using the general-offset product quadrature (spectral accuracy off-node).
cd boundary_eval_single_layer(const BoundaryMesh& mesh, const Wavenumber& k,
                              const Eigen::VectorXcd& density, double t);

// Binary round trip for assembled operators.
void dump_operator(const BoundaryOperator& op, const std::string& path);
BoundaryOperator load_operator(const std::string& path);

}  // namespace mirage
