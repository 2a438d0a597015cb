#include "mirage/localize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace mirage {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Relative far-field strength above which a basis column gets a free
// complex amplitude, and below which it is dropped altogether.  In between
// the column is phase-locked to its resonance factor: a faint pattern fit
// with a free phase can rotate into near-collinearity with the dipole
// columns and destroy the position information it carries.
constexpr double kStrongFraction = 0.1;
constexpr double kKeepFraction = 1e-3;

// Nearest-node mask lookup: the continuous search must stay out of the
// excluded region (particle interior and its guard shell), which only the
// grid knows about.
bool masked_at(const ImageGrid& image, const Eigen::Vector2d& z) {
  if (image.n_side < 1 || !(image.spacing > 0.0)) return false;
  const Eigen::Vector2d origin = image.points.col(0);
  const auto index = [&](double offset) {
    return std::clamp(static_cast<int>(std::lround(offset / image.spacing)),
                      0, image.n_side - 1);
  };
  const int ix = index(z.x() - origin.x());
  const int iy = index(z.y() - origin.y());
  return image.mask[static_cast<std::size_t>(iy) * image.n_side + ix] != 0;
}

Eigen::Vector2d clamp_to(const FitWindow& window, Eigen::Vector2d z) {
  z.x() = std::clamp(z.x(), window.center.x() - window.half_width,
                     window.center.x() + window.half_width);
  z.y() = std::clamp(z.y(), window.center.y() - window.half_width,
                     window.center.y() + window.half_width);
  return z;
}

bool in_window(const FitWindow& window, const Eigen::Vector2d& z) {
  return std::abs(z.x() - window.center.x()) <= window.half_width &&
         std::abs(z.y() - window.center.y()) <= window.half_width;
}

// Greedy selection of well-separated candidates, best score first.
std::vector<Eigen::Vector2d> separated_best(
    std::vector<std::pair<double, Eigen::Vector2d>> scored, double min_sep,
    int count) {
  std::stable_sort(
      scored.begin(), scored.end(),
      [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Vector2d> picked;
  for (const auto& [score, z] : scored) {
    bool separated = true;
    for (const Eigen::Vector2d& s : picked)
      if ((z - s).norm() < min_sep) {
        separated = false;
        break;
      }
    if (separated) picked.push_back(z);
    if (static_cast<int>(picked.size()) >= count) break;
  }
  return picked;
}

// How each real unknown of the linear fit maps back to a basis mode.
struct ColumnTag {
  int mode = -1;   // basis column index
  int role = 0;    // 0: real part, 1: imaginary part, 2: phase-locked
  cd scale{0, 0};  // fitted coefficient -> amplitude on the given column
};

// Everything one fit evaluates per candidate position: the data reduced to
// the ring factor's row space, and the fixed (mode) columns of the design.
struct FitEngine {
  const LocalizationProblem* problem = nullptr;
  Wavenumber k{0.0};
  Eigen::VectorXd target;       // [Re; Im] of root_gram * samples
  Eigen::MatrixXd fixed;        // real-stacked mode columns
  std::vector<ColumnTag> tags;  // one per fixed column
  bool rank_notice = false;

  int rows() const { return static_cast<int>(target.size()); }

  // Dipole response in the factor's row space: two complex columns, one
  // per moment component, real-stacked for the real-linear solve.
  Eigen::MatrixXd design(const Eigen::Vector2d& z) const {
    const Eigen::Matrix2Xd& sensors = problem->sensors;
    const int m = static_cast<int>(sensors.cols());
    Eigen::MatrixXcd dipole(m, 2);
    for (int i = 0; i < m; ++i)
      dipole.row(i) = grad_gamma(k, sensors.col(i) - z).transpose();
    const Eigen::MatrixXcd b = problem->root_gram * dipole;
    const int r = static_cast<int>(b.rows());
    Eigen::MatrixXd d(2 * r, 2 + fixed.cols());
    for (int c = 0; c < 2; ++c) {
      d.col(c).head(r) = b.col(c).real();
      d.col(c).tail(r) = b.col(c).imag();
    }
    if (fixed.cols() > 0) d.rightCols(fixed.cols()) = fixed;
    return d;
  }

  struct Solved {
    Eigen::VectorXd x;          // unknowns in the raw column scaling
    double objective = 0.0;     // squared residual (unweighted)
    bool regularized = false;   // numerically rank-deficient design
  };

  // Linear least squares with the columns equilibrated to unit norm: the
  // raw dipole columns are orders of magnitude larger than the normalized
  // mode columns, and a relative SVD cutoff on the unscaled matrix would
  // silently discard the faint mode directions.
  Solved solve(const Eigen::Vector2d& z) const {
    const Eigen::MatrixXd d = design(z);
    Eigen::VectorXd scale(d.cols());
    for (int c = 0; c < d.cols(); ++c)
      scale[c] = std::max(d.col(c).norm(), 1e-300);
    const Eigen::MatrixXd equilibrated =
        d * scale.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        equilibrated, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    const Eigen::VectorXd u = svd.solve(target);
    return {scale.cwiseInverse().asDiagonal() * u,
            (equilibrated * u - target).squaredNorm(),
            svd.rank() < d.cols()};
  }

  // The search domain is the window minus the excluded region; a candidate
  // inside the particle (or its guard shell) is rejected outright rather
  // than scored, so the optimizer cannot park a fictitious emitter there.
  double objective(const Eigen::Vector2d& z) const {
    if (masked_at(problem->image, z))
      return std::numeric_limits<double>::infinity();
    return solve(z).objective;
  }
};

FitEngine make_engine(const LocalizationProblem& problem, bool with_basis) {
  FitEngine engine;
  engine.problem = &problem;
  engine.k = Wavenumber(problem.kernel.k_m);

  const Eigen::VectorXcd reduced = problem.root_gram * problem.samples;
  const int r = static_cast<int>(reduced.size());
  engine.target.resize(2 * r);
  engine.target.head(r) = reduced.real();
  engine.target.tail(r) = reduced.imag();

  if (!with_basis || problem.basis.n_modes() == 0) return engine;

  const ModeBasis& basis = problem.basis;
  if (basis.farfields.rows() != problem.sensors.cols())
    throw std::invalid_argument("fit: basis sensor count mismatch");
  if (basis.gains.size() != basis.n_modes())
    throw std::invalid_argument("fit: one gain per basis mode required");

  double strongest = 0.0;
  for (int j = 0; j < basis.n_modes(); ++j)
    strongest = std::max(strongest, basis.farfields.col(j).norm());
  if (!(strongest > 0.0))
    throw std::invalid_argument("fit: basis columns are all zero");

  std::vector<Eigen::VectorXd> columns;
  for (int j = 0; j < basis.n_modes(); ++j) {
    const double strength = basis.farfields.col(j).norm();
    if (strength < kKeepFraction * strongest) continue;  // dropped
    Eigen::VectorXcd col = problem.root_gram * basis.farfields.col(j);
    const double norm = col.norm();
    if (!(norm > 0.0)) continue;
    col /= norm;
    Eigen::VectorXd stacked(2 * r);
    if (strength >= kStrongFraction * strongest) {
      stacked << col.real(), col.imag();
      columns.push_back(stacked);
      engine.tags.push_back({j, 0, cd(1.0 / norm, 0.0)});
      stacked << -col.imag(), col.real();
      columns.push_back(stacked);
      engine.tags.push_back({j, 1, cd(1.0 / norm, 0.0)});
    } else {
      const cd gain = basis.gains[j];
      if (!(std::abs(gain) > 0.0))
        throw std::invalid_argument("fit: zero gain on a phase-locked mode");
      const cd phase = gain / std::abs(gain);
      col *= phase;
      stacked << col.real(), col.imag();
      columns.push_back(stacked);
      engine.tags.push_back({j, 2, phase / norm});
    }
  }
  engine.fixed.resize(2 * r, static_cast<int>(columns.size()));
  for (int c = 0; c < engine.fixed.cols(); ++c)
    engine.fixed.col(c) = columns[c];
  return engine;
}

struct SimplexOutcome {
  Eigen::Vector2d position{0.0, 0.0};
  double objective = 0.0;
  int n_evaluations = 0;
  bool converged = false;
};

// Standard reflect/expand/contract/shrink simplex on the clamped window.
SimplexOutcome nelder_mead(const FitEngine& engine, const FitWindow& window,
                           const Eigen::Vector2d& seed, double step,
                           const OptimizerSettings& settings) {
  struct Vertex {
    Eigen::Vector2d z;
    double f;
  };
  SimplexOutcome out;
  auto evaluate = [&](const Eigen::Vector2d& z) {
    ++out.n_evaluations;
    return engine.objective(z);
  };

  std::array<Vertex, 3> simplex;
  simplex[0].z = clamp_to(window, seed);
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::Vector2d z = simplex[0].z;
    z[axis] += step;
    z = clamp_to(window, z);
    if ((z - simplex[0].z).norm() < 0.5 * step) {
      z = simplex[0].z;
      z[axis] -= step;
      z = clamp_to(window, z);
    }
    simplex[axis + 1].z = z;
  }
  for (Vertex& v : simplex) v.f = evaluate(v.z);

  while (out.n_evaluations < settings.max_evals) {
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    const double diameter =
        std::max((simplex[1].z - simplex[0].z).cwiseAbs().maxCoeff(),
                 (simplex[2].z - simplex[0].z).cwiseAbs().maxCoeff());
    if (diameter < settings.z_tol) {
      out.converged = true;
      break;
    }
    const Eigen::Vector2d centroid = 0.5 * (simplex[0].z + simplex[1].z);
    const Eigen::Vector2d reflected =
        clamp_to(window, centroid + (centroid - simplex[2].z));
    const double fr = evaluate(reflected);
    if (fr < simplex[0].f) {
      const Eigen::Vector2d expanded =
          clamp_to(window, centroid + 2.0 * (centroid - simplex[2].z));
      const double fe = evaluate(expanded);
      if (fe < fr)
        simplex[2] = {expanded, fe};
      else
        simplex[2] = {reflected, fr};
    } else if (fr < simplex[1].f) {
      simplex[2] = {reflected, fr};
    } else {
      const Eigen::Vector2d contracted =
          clamp_to(window, centroid + 0.5 * (simplex[2].z - centroid));
      const double fc = evaluate(contracted);
      if (fc < simplex[2].f) {
        simplex[2] = {contracted, fc};
      } else {
        for (int i = 1; i < 3; ++i) {
          simplex[i].z = clamp_to(
              window, simplex[0].z + 0.5 * (simplex[i].z - simplex[0].z));
          simplex[i].f = evaluate(simplex[i].z);
        }
      }
    }
  }

  std::sort(simplex.begin(), simplex.end(),
            [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
  out.position = simplex[0].z;
  out.objective = simplex[0].f;
  return out;
}

LocalizationResult fit_impl(const LocalizationProblem& problem,
                            bool with_basis) {
  const OptimizerSettings& settings = problem.settings;
  if (!(problem.window.half_width > 0.0))
    throw std::invalid_argument("fit: window half_width must be positive");
  if (settings.multistart < 1 || settings.max_evals < 10 ||
      !(settings.z_tol > 0.0))
    throw std::invalid_argument("fit: bad optimizer settings");
  if (problem.root_gram.cols() != problem.samples.size())
    throw std::invalid_argument("fit: problem factor/sample size mismatch");

  FitEngine engine = make_engine(problem, with_basis);
  const double data_norm = engine.target.norm();
  if (!(data_norm > 0.0)) throw std::invalid_argument("fit: image is zero");

  LocalizationResult result;

  // Multistart seeds: scan the objective itself at every usable grid node
  // and keep the best well-separated *local minima* of the sampled field.
  // Scanning the fit's own landscape (rather than the data image) matters
  // for the corrected fit, whose global basin sits near the true source
  // while the image peaks at the displaced focal spot; restricting seeds
  // to local minima gives one seed per basin instead of several along a
  // single flat valley.
  const ImageGrid& image = problem.image;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> field(static_cast<std::size_t>(image.n_points()), inf);
  for (int j = 0; j < image.points.cols(); ++j) {
    if (image.mask[j] || !in_window(problem.window, image.points.col(j)))
      continue;
    field[j] = engine.objective(image.points.col(j));
    ++result.n_evaluations;
  }
  std::vector<std::pair<double, Eigen::Vector2d>> minima;
  for (int iy = 0; iy < image.n_side; ++iy)
    for (int ix = 0; ix < image.n_side; ++ix) {
      const int j = iy * image.n_side + ix;
      if (!std::isfinite(field[j])) continue;
      bool lowest = true;
      for (int dy = -1; dy <= 1 && lowest; ++dy)
        for (int dx = -1; dx <= 1 && lowest; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = ix + dx;
          const int ny = iy + dy;
          if (nx < 0 || ny < 0 || nx >= image.n_side || ny >= image.n_side)
            continue;
          if (field[ny * image.n_side + nx] < field[j]) lowest = false;
        }
      if (lowest) minima.push_back({field[j], image.points.col(j)});
    }
  const double spacing = image.spacing;
  const double min_sep =
      spacing > 0.0 ? 4.0 * spacing : problem.window.half_width / 10.0;
  std::vector<Eigen::Vector2d> seeds =
      separated_best(std::move(minima), min_sep, settings.multistart);
  if (seeds.empty()) seeds.push_back(problem.window.center);
  const double coarse_step =
      spacing > 0.0 ? 2.0 * spacing : problem.window.half_width / 10.0;

  // Coarse simplex stage.  Each seed also stays in the candidate pool with
  // its scanned value: a wide-stepping simplex can walk out of a narrow
  // basin, and the seed itself is then the better starting point for the
  // refinement stage.
  std::vector<SimplexOutcome> stage;
  for (const Eigen::Vector2d& seed : seeds) {
    SimplexOutcome coarse =
        nelder_mead(engine, problem.window, seed, coarse_step, settings);
    result.n_evaluations += coarse.n_evaluations;
    stage.push_back(coarse);
    stage.push_back(SimplexOutcome{seed, engine.objective(seed), 0, false});
  }
  // Refinement restarts shrink the simplex well below the grid spacing.
  // Competing basins can sit within a fraction of a percent of each other
  // while only one of them refines to a markedly lower floor, so the best
  // few near-tie candidates (within a factor of ten) all get polished, and
  // the winner's last restart carries the convergence verdict.
  double stage_best = inf;
  for (const SimplexOutcome& run : stage)
    stage_best = std::min(stage_best, run.objective);
  std::stable_sort(stage.begin(), stage.end(),
                   [](const SimplexOutcome& a, const SimplexOutcome& b) {
                     return a.objective < b.objective;
                   });
  bool have_best = false;
  SimplexOutcome best;
  bool best_converged = false;
  int polished = 0;
  for (const SimplexOutcome& run : stage) {
    if (polished >= 3 || run.objective > 10.0 * stage_best) break;
    ++polished;
    SimplexOutcome refined = run;
    bool refined_converged = run.converged;
    for (const double factor : {0.5, 0.1, 0.02}) {
      const SimplexOutcome sub =
          nelder_mead(engine, problem.window, refined.position,
                      factor * coarse_step, settings);
      result.n_evaluations += sub.n_evaluations;
      if (sub.objective <= refined.objective) refined = sub;
      refined_converged = sub.converged;
    }
    if (!have_best || refined.objective < best.objective) {
      best = refined;
      best_converged = refined_converged;
      have_best = true;
    }
  }
  result.converged = best_converged;

  // Recover the linear unknowns at the optimum.
  const FitEngine::Solved solved = engine.solve(best.position);
  const Eigen::VectorXd& x = solved.x;

  result.position = best.position;
  result.moment = Eigen::Vector2d(x[0], x[1]);
  result.objective = solved.objective * problem.cell_area;
  result.relative_residual = std::sqrt(solved.objective) / data_norm;
  result.regularized = solved.regularized;
  result.mode_amplitudes =
      Eigen::VectorXcd::Zero(with_basis ? problem.basis.n_modes() : 0);
  for (std::size_t c = 0; c < engine.tags.size(); ++c) {
    const ColumnTag& tag = engine.tags[c];
    const double value = x[2 + static_cast<int>(c)];
    if (tag.role == 1)
      result.mode_amplitudes[tag.mode] += cd(0.0, value) * tag.scale;
    else
      result.mode_amplitudes[tag.mode] += value * tag.scale;
  }
  return result;
}

}  // namespace

LocalizationProblem make_problem(const FarFieldData& data,
                                 const DrudeMedium& medium,
                                 const ImageGrid& domain,
                                 const FitWindow& window, ModeBasis basis,
                                 OptimizerSettings settings) {
  const int m = static_cast<int>(data.samples.size());
  if (m == 0 || data.sensors.cols() != m)
    throw std::invalid_argument("make_problem: empty or inconsistent data");
  if (domain.active_points() < 3)
    throw std::invalid_argument("make_problem: too few usable grid points");

  LocalizationProblem problem;
  problem.image = domain;
  backpropagate(data, medium, problem.image);
  const Wavenumber k_m = background_wavenumber(medium, data.omega);
  problem.kernel = PsfKernel{k_m.k.real(), data.radius,
                             static_cast<int>(data.sensors.cols())};
  problem.window = window;
  problem.settings = settings;
  problem.basis = std::move(basis);
  problem.sensors = data.sensors;
  problem.samples = data.samples;
  problem.cell_area =
      domain.spacing > 0.0 ? domain.spacing * domain.spacing : 1.0;

  // Backpropagation of a unit sample onto the active grid points.
  std::vector<int> active;
  for (int j = 0; j < domain.points.cols(); ++j)
    if (!domain.mask[j]) active.push_back(j);
  const int a = static_cast<int>(active.size());
  const double w = kTwoPi * data.radius / m;
  problem.back_map.resize(2 * a, m);
  for (int row = 0; row < a; ++row) {
    const Eigen::Vector2d y = domain.points.col(active[row]);
    for (int i = 0; i < m; ++i)
      problem.back_map.block<2, 1>(2 * row, i) =
          (-grad_gamma(k_m, data.sensors.col(i) - y)).conjugate() * w;
  }

  // Low-rank square root of the Gram matrix of the backpropagation map.
  // The map is heavily band-limited on a subwavelength window, so most
  // eigenvalues vanish; dropping them changes the objective by a relative
  // 1e-13 while shrinking every candidate evaluation.
  const Eigen::MatrixXcd gram =
      problem.back_map.adjoint() * problem.back_map;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram);
  const Eigen::VectorXd values = eig.eigenvalues();
  const double cutoff = values.maxCoeff() * 1e-13;
  int rank = 0;
  for (int i = 0; i < values.size(); ++i)
    if (values[i] > cutoff) ++rank;
  problem.root_gram.resize(rank, m);
  int row = 0;
  for (int i = 0; i < values.size(); ++i)
    if (values[i] > cutoff)
      problem.root_gram.row(row++) =
          std::sqrt(values[i]) * eig.eigenvectors().col(i).adjoint();
  return problem;
}

void set_data(LocalizationProblem& problem, const FarFieldData& data) {
  if (data.samples.size() != problem.samples.size())
    throw std::invalid_argument("set_data: sample count mismatch");
  problem.samples = data.samples;
  // Refresh the data image on the active points (the masked ones are not
  // part of any fit) so peak seeding tracks the new data.
  const Eigen::VectorXcd image = problem.back_map * problem.samples;
  int row = 0;
  for (int j = 0; j < problem.image.points.cols(); ++j) {
    if (problem.image.mask[j]) continue;
    problem.image.values.col(j) = image.segment<2>(2 * row);
    ++row;
  }
}

void set_basis(LocalizationProblem& problem, ModeBasis basis) {
  problem.basis = std::move(basis);
}

LocalizationResult fit_uncorrected(const LocalizationProblem& problem) {
  if (problem.basis.n_modes() > 0)
    throw std::invalid_argument(
        "fit_uncorrected: problem carries a mode basis");
  return fit_impl(problem, false);
}

LocalizationResult fit_corrected(const LocalizationProblem& problem) {
  return fit_impl(problem, true);
}

double image_space_residual(const LocalizationProblem& problem,
                            const LocalizationResult& result) {
  const int m = static_cast<int>(problem.samples.size());
  const Wavenumber k(problem.kernel.k_m);
  Eigen::VectorXcd residual(m);
  const Eigen::Vector2cd moment = result.moment.cast<cd>();
  for (int i = 0; i < m; ++i)
    residual[i] = grad_gamma(k, problem.sensors.col(i) - result.position)
                      .cwiseProduct(moment)
                      .sum();
  for (int j = 0; j < result.mode_amplitudes.size(); ++j)
    residual += result.mode_amplitudes[j] * problem.basis.farfields.col(j);
  residual = problem.samples - residual;

  // Direct quadrature backpropagation of the residual samples.
  const double w = kTwoPi * problem.kernel.radius / m;
  double sum = 0.0;
  for (int j = 0; j < problem.image.points.cols(); ++j) {
    if (problem.image.mask[j]) continue;
    const Eigen::Vector2d y = problem.image.points.col(j);
    Eigen::Vector2cd acc = Eigen::Vector2cd::Zero();
    for (int i = 0; i < m; ++i)
      acc += (-grad_gamma(k, problem.sensors.col(i) - y)).conjugate() *
             (residual[i] * w);
    sum += acc.squaredNorm();
  }
  return std::sqrt(sum * problem.cell_area);
}

double objective_at(const LocalizationProblem& problem,
                    const Eigen::Vector2d& z) {
  const FitEngine engine = make_engine(problem, problem.basis.n_modes() > 0);
  return engine.objective(z) * problem.cell_area;
}

void add_noise(FarFieldData& data, double sigma0, std::uint64_t seed) {
  if (sigma0 < 0.0) throw std::invalid_argument("add_noise: sigma0 < 0");
  const int n = static_cast<int>(data.samples.size());
  if (n == 0) throw std::invalid_argument("add_noise: no samples");
  data.sigma0 = sigma0;
  if (sigma0 == 0.0) return;
  const double sigma = sigma0 * data.samples.norm() / std::sqrt(double(n));
  std::mt19937_64 rng(seed);
  auto uniform = [&rng]() {
    return (double(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  };
  // Box-Muller keeps the realizations identical across standard libraries,
  // unlike std::normal_distribution.
  for (int i = 0; i < n; ++i) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double g0 = radius * std::cos(kTwoPi * u2);
    const double g1 = radius * std::sin(kTwoPi * u2);
    data.samples[i] += cd(g0, g1) * (sigma / std::sqrt(2.0));
  }
}

LocalizationError error_metrics(const LocalizationResult& fit,
                                const Eigen::Vector2d& true_position,
                                const Eigen::Vector2d& true_moment) {
  LocalizationError err;
  err.position_nm = (fit.position - true_position).norm() * 1e9;
  if (!(fit.moment.norm() > 0.0))
    throw std::invalid_argument("error_metrics: zero fitted moment");
  const double overlap =
      std::min(1.0, std::abs(fit.moment.normalized().dot(
                        true_moment.normalized())));
  err.orientation_deg = std::acos(overlap) * (180.0 / 3.14159265358979323846);
  return err;
}

}  // namespace mirage
