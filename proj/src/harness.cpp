#include "mirage/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace mirage {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent, reproducible stream per (level, realization) pair.
std::uint64_t mix_seed(std::uint64_t base, int a, int b) {
  return splitmix64(base + 0x9E3779B97F4A7C15ull * (std::uint64_t(a) + 1) +
                    0x94D049BB133111EBull * (std::uint64_t(b) + 1));
}

CurveKind parse_kind(const std::string& kind) {
  if (kind == "disk") return CurveKind::disk;
  if (kind == "flower") return CurveKind::flower;
  if (kind == "diamond") return CurveKind::diamond;
  if (kind == "ellipse") return CurveKind::ellipse;
  if (kind == "fourier") return CurveKind::fourier;
  throw std::invalid_argument("parse_config: unknown shape kind '" + kind +
                              "'");
}

Eigen::Vector2d parse_vec2(const json& j) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("parse_config: expected a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return quoted;
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string hash_hex(const ExperimentConfig& config) {
  std::ostringstream hash;
  hash << std::hex << config_hash(config);
  return hash.str();
}

// Provenance block shared by every output directory: the config hash plus
// the physical constants the run was evaluated with.
json meta_json(const ExperimentContext& ctx) {
  return json{{"name", ctx.config.name},
              {"config_hash", hash_hex(ctx.config)},
              {"mesh_size", ctx.config.mesh_size},
              {"omega", ctx.omega},
              {"ring_radius", ctx.ring_radius},
              {"n_sensors", ctx.config.n_sensors},
              {"constants",
               {{"omega_p", ctx.medium.omega_p},
                {"tau_relax", ctx.medium.tau_relax},
                {"eps0", ctx.medium.eps0},
                {"mu0", ctx.medium.mu0},
                {"delta", ctx.config.shape.scale}}}};
}

void write_json(const std::string& path, const json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_json: cannot open '" + path + "'");
  out << value.dump(2) << "\n";
}

void write_meta(const std::string& out_dir, const ExperimentContext& ctx) {
  write_json(join_path(out_dir, "meta.json"), meta_json(ctx));
}

FitReport make_report(const LocalizationResult& result,
                      const Eigen::Vector2d& position,
                      const Eigen::Vector2d& moment) {
  return {result, error_metrics(result, position, moment)};
}

std::vector<std::string> fit_row(const std::string& method,
                                 const FitReport& report) {
  const LocalizationResult& r = report.result;
  const Eigen::Vector2d axis = r.moment.normalized();
  return {method,
          format_full(r.position.x()),
          format_full(r.position.y()),
          format_full(axis.x()),
          format_full(axis.y()),
          format_full(report.error.position_nm),
          format_full(report.error.orientation_deg),
          format_full(r.relative_residual),
          std::to_string(r.n_evaluations),
          r.converged ? "1" : "0",
          r.regularized ? "1" : "0"};
}

const std::vector<std::string> kFitHeader = {
    "method",          "x",           "y",           "px",
    "py",              "error_nm",    "orientation_deg",
    "relative_residual", "evaluations", "converged",   "regularized"};

// Linear-interpolation quantile of a sorted sample (the convention most
// plotting libraries use for boxplots).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = p * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct BoxStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  std::vector<double> outliers;  // beyond 1.5 IQR from the quartiles
};

BoxStats box_stats(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  BoxStats stats;
  stats.q1 = quantile_sorted(values, 0.25);
  stats.median = quantile_sorted(values, 0.5);
  stats.q3 = quantile_sorted(values, 0.75);
  const double reach = 1.5 * (stats.q3 - stats.q1);
  stats.whisker_low = stats.q3;
  stats.whisker_high = stats.q1;
  for (double v : values) {
    if (v < stats.q1 - reach || v > stats.q3 + reach) {
      stats.outliers.push_back(v);
    } else {
      stats.whisker_low = std::min(stats.whisker_low, v);
      stats.whisker_high = std::max(stats.whisker_high, v);
    }
  }
  return stats;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig c;
  c.name = j.value("name", c.name);

  const json& shape = j.at("shape");
  c.shape.kind = parse_kind(shape.at("kind").get<std::string>());
  c.shape.scale = shape.at("scale").get<double>();
  if (shape.contains("center")) c.shape.center = parse_vec2(shape["center"]);
  c.shape.petal_mean = shape.value("petal_mean", c.shape.petal_mean);
  c.shape.petal_amplitude =
      shape.value("petal_amplitude", c.shape.petal_amplitude);
  c.shape.petal_count = shape.value("petal_count", c.shape.petal_count);
  c.shape.diamond_coeff = shape.value("diamond_coeff", c.shape.diamond_coeff);
  c.shape.semi_axis_a = shape.value("semi_axis_a", c.shape.semi_axis_a);
  c.shape.semi_axis_b = shape.value("semi_axis_b", c.shape.semi_axis_b);
  c.shape.fourier_c0 = shape.value("fourier_c0", c.shape.fourier_c0);
  if (shape.contains("fourier_cos"))
    c.shape.fourier_cos = shape["fourier_cos"].get<std::vector<double>>();
  if (shape.contains("fourier_sin"))
    c.shape.fourier_sin = shape["fourier_sin"].get<std::vector<double>>();

  c.mesh_size = j.value("mesh_size", c.mesh_size);

  if (j.contains("omega")) {
    const json& omega = j["omega"];
    const std::string type = omega.at("type").get<std::string>();
    if (type == "fixed") {
      c.omega_fixed = true;
      c.omega_value = omega.at("value").get<double>();
    } else if (type == "resonance") {
      c.omega_fixed = false;
      c.resonance_mode = omega.at("mode").get<int>();
    } else {
      throw std::invalid_argument("parse_config: omega type must be 'fixed' "
                                  "or 'resonance'");
    }
  }

  if (j.contains("source")) {
    const json& source = j["source"];
    c.source_position = parse_vec2(source.at("position"));
    c.source_moment = parse_vec2(source.at("moment"));
    if (!(c.source_moment.norm() > 0.0))
      throw std::invalid_argument("parse_config: zero source moment");
    c.source_moment.normalize();
  }

  if (j.contains("ring")) {
    c.ring_radius_factor =
        j["ring"].value("radius_factor", c.ring_radius_factor);
    c.n_sensors = j["ring"].value("sensors", c.n_sensors);
  }
  if (j.contains("grid")) {
    c.grid_half_width = j["grid"].value("half_width", c.grid_half_width);
    c.grid_side = j["grid"].value("n_side", c.grid_side);
  }
  c.n_modes = j.value("modes", c.n_modes);
  if (j.contains("fit")) {
    c.fit.multistart = j["fit"].value("multistart", c.fit.multistart);
    c.fit.max_evals = j["fit"].value("max_evals", c.fit.max_evals);
    c.fit.z_tol = j["fit"].value("z_tol", c.fit.z_tol);
  }
  if (j.contains("noise")) {
    const json& noise = j["noise"];
    if (noise.contains("levels"))
      c.noise_levels = noise["levels"].get<std::vector<double>>();
    c.noise_realizations =
        noise.value("realizations", c.noise_realizations);
    c.seed = noise.value("seed", c.seed);
    c.noise_fit_uncorrected =
        noise.value("fit_uncorrected", c.noise_fit_uncorrected);
  }
  if (j.contains("sweep")) {
    for (const json& p : j["sweep"].at("positions"))
      c.sweep_positions.push_back(parse_vec2(p));
  }
  if (j.contains("table"))
    c.table_sizes = j["table"].at("sizes").get<std::vector<int>>();
  c.threads = j.value("threads", c.threads);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_config: cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string canonical_config(const ExperimentConfig& c) {
  // threads is excluded: it changes how fast the run happens, never what
  // it computes.
  std::ostringstream s;
  s.precision(17);
  s << "name=" << c.name << ";kind=" << static_cast<int>(c.shape.kind)
    << ";scale=" << c.shape.scale << ";center=" << c.shape.center.x() << ','
    << c.shape.center.y() << ";petal=" << c.shape.petal_mean << ','
    << c.shape.petal_amplitude << ',' << c.shape.petal_count
    << ";diamond=" << c.shape.diamond_coeff << ";axes=" << c.shape.semi_axis_a
    << ',' << c.shape.semi_axis_b << ";c0=" << c.shape.fourier_c0 << ";cos=";
  for (double v : c.shape.fourier_cos) s << v << ',';
  s << ";sin=";
  for (double v : c.shape.fourier_sin) s << v << ',';
  s << ";mesh=" << c.mesh_size << ";omega_fixed=" << c.omega_fixed
    << ";omega=" << c.omega_value << ";mode=" << c.resonance_mode
    << ";source=" << c.source_position.x() << ',' << c.source_position.y()
    << ',' << c.source_moment.x() << ',' << c.source_moment.y()
    << ";ring=" << c.ring_radius_factor << ',' << c.n_sensors
    << ";grid=" << c.grid_half_width << ',' << c.grid_side
    << ";modes=" << c.n_modes << ";fit=" << c.fit.multistart << ','
    << c.fit.max_evals << ',' << c.fit.z_tol << ";noise=";
  for (double v : c.noise_levels) s << v << ',';
  s << ";realizations=" << c.noise_realizations << ";seed=" << c.seed
    << ";noise_uncorrected=" << c.noise_fit_uncorrected << ";sweep=";
  for (const Eigen::Vector2d& p : c.sweep_positions)
    s << p.x() << ',' << p.y() << ';';
  s << ";table=";
  for (int n : c.table_sizes) s << n << ',';
  return s.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a(canonical_config(config));
}

std::string format_full(double value) {
  char buf[48];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
  auto write_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_field(row[i]);
    }
    out << "\r\n";
  };
  write_row(header);
  for (const std::vector<std::string>& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: ragged row");
    write_row(row);
  }
}

void parallel_for(int count, int n_threads,
                  const std::function<void(int)>& body) {
  if (count <= 0) return;
  n_threads = std::clamp(n_threads, 1, count);
  if (n_threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (!stop.load(std::memory_order_relaxed)) {
      const int i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        stop.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2]
               : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * (i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman_rho: need two samples of equal size");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  double mean = (n + 1.0) / 2.0;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    var_a += (ra[i] - mean) * (ra[i] - mean);
    var_b += (rb[i] - mean) * (rb[i] - mean);
  }
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

ExperimentContext make_context(const ExperimentConfig& config) {
  if (config.n_modes < 0)
    throw std::invalid_argument("make_context: modes must be >= 0");
  const ParametricCurve curve = build_curve(config.shape);
  BoundaryMesh mesh = discretize(curve, config.mesh_size);

  int n_request = std::max({config.n_modes, config.resonance_mode, 8});
  for (int n : config.table_sizes) n_request = std::max(n_request, n);
  n_request = std::min(n_request, config.mesh_size - 2);
  NpSpectrum spectrum = build_spectrum(mesh, n_request);

  DrudeMedium medium;
  const double delta = config.shape.scale;
  ResonanceTable resonances =
      find_resonances(spectrum, medium, 1e-3 * medium.omega_p,
                      (1.0 - 1e-9) * medium.omega_p, delta);

  double omega = 0.0;
  if (config.omega_fixed) {
    if (!(config.omega_value > 0.0))
      throw std::invalid_argument("make_context: fixed omega must be positive");
    omega = config.omega_value;
  } else {
    for (const ResonanceEntry& entry : resonances.entries)
      if (entry.mode == config.resonance_mode) omega = entry.omega;
    if (omega == 0.0)
      throw std::runtime_error(
          "make_context: requested mode has no tabulated resonance");
  }

  const double ring_radius = config.ring_radius_factor * config.shape.scale;
  if (!(ring_radius > 10.0 * config.shape.scale))
    throw std::invalid_argument(
        "make_context: sensor ring must enclose the particle with margin");

  return ExperimentContext{config,     std::move(mesh), medium,
                           std::move(spectrum), std::move(resonances),
                           omega,      ring_radius};
}

ModeBasis make_mode_basis(const ExperimentContext& ctx, int n_modes) {
  if (n_modes < 0 || n_modes > ctx.spectrum.n_modes())
    throw std::invalid_argument("make_mode_basis: n_modes out of range");
  ModeBasis basis;
  if (n_modes == 0) return basis;
  const Wavenumber k_m = background_wavenumber(ctx.medium, ctx.omega);
  const Eigen::Matrix2Xd sensors =
      sensor_ring(ctx.ring_radius, ctx.config.n_sensors);
  basis.farfields.resize(sensors.cols(), n_modes);
  basis.gains.resize(n_modes);
  const double delta = ctx.config.shape.scale;
  for (int n = 1; n <= n_modes; ++n) {
    for (int i = 0; i < sensors.cols(); ++i)
      basis.farfields(i, n - 1) =
          mode_field(ctx.spectrum, ctx.mesh, k_m, n, sensors.col(i)).value;
    basis.gains[n - 1] =
        1.0 / tau_n(ctx.spectrum, ctx.medium, ctx.omega, n, delta);
  }
  return basis;
}

Pipeline make_pipeline(const ExperimentConfig& config) {
  ExperimentContext ctx = make_context(config);
  DipoleSource source;
  source.position = config.source_position;
  if (!(config.source_moment.norm() > 0.0))
    throw std::invalid_argument("make_pipeline: zero source moment");
  source.moment = config.source_moment.normalized();
  source.omega = ctx.omega;

  BiePair solution = solve_transmission(ctx.mesh, ctx.medium, source);
  FarFieldData clean = measure(ctx.mesh, ctx.medium, source, solution,
                               ctx.ring_radius, config.n_sensors);

  ImageGrid geometry = make_image_grid(config.shape.center,
                                       config.grid_half_width,
                                       config.grid_side, &ctx.mesh);
  FitWindow window{config.shape.center, config.grid_half_width};
  ModeBasis basis = make_mode_basis(ctx, config.n_modes);
  LocalizationProblem problem =
      make_problem(clean, ctx.medium, geometry, window, {}, config.fit);

  return Pipeline{std::move(ctx),      source,
                  std::move(solution), std::move(clean),
                  std::move(geometry), window,
                  std::move(basis),    std::move(problem)};
}

ModesSummary run_modes(const ExperimentConfig& config,
                       const std::string& out_dir) {
  ExperimentContext ctx = make_context(config);
  ModesSummary summary{ctx.spectrum.eigenvalues, ctx.resonances, ctx.omega};

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_meta(out_dir, ctx);

    std::vector<std::vector<std::string>> rows;
    for (int n = 0; n < summary.eigenvalues.size(); ++n) {
      std::string omega, tau;
      for (const ResonanceEntry& entry : summary.resonances.entries)
        if (entry.mode == n) {
          omega = format_full(entry.omega);
          tau = format_full(entry.tau_abs);
        }
      rows.push_back({std::to_string(n), format_full(summary.eigenvalues[n]),
                      omega, tau});
    }
    write_csv(join_path(out_dir, "modes.csv"),
              {"mode", "lambda", "resonance_omega", "tau_abs"}, rows);

    // Gallery of the leading exterior mode fields at the resolved
    // frequency, on the same grid the localization experiments use.
    const ImageGrid grid =
        make_image_grid(config.shape.center, config.grid_half_width,
                        config.grid_side, &ctx.mesh);
    const Wavenumber k_m = background_wavenumber(ctx.medium, ctx.omega);
    const int n_fields = std::min(6, ctx.spectrum.n_modes());
    std::vector<std::vector<std::string>> field_rows;
    for (int n = 1; n <= n_fields; ++n) {
      for (int j = 0; j < grid.points.cols(); ++j) {
        cd value{0.0, 0.0};
        if (!grid.mask[j])
          value =
              mode_field(ctx.spectrum, ctx.mesh, k_m, n, grid.points.col(j))
                  .value;
        field_rows.push_back({std::to_string(n),
                              format_full(grid.points(0, j)),
                              format_full(grid.points(1, j)),
                              std::to_string(int(grid.mask[j])),
                              format_full(value.real()),
                              format_full(value.imag())});
      }
    }
    write_csv(join_path(out_dir, "mode_fields.csv"),
              {"mode", "x", "y", "mask", "u_re", "u_im"}, field_rows);

    json eigenvalues = json::array();
    for (int n = 0; n < summary.eigenvalues.size(); ++n)
      eigenvalues.push_back(summary.eigenvalues[n]);
    json resonances = json::array();
    for (const ResonanceEntry& entry : summary.resonances.entries)
      resonances.push_back({{"mode", entry.mode},
                            {"omega", entry.omega},
                            {"tau_abs", entry.tau_abs}});
    json doc = meta_json(ctx);
    doc["eigenvalues"] = eigenvalues;
    doc["resonances"] = resonances;
    doc["omitted"] = summary.resonances.omitted;
    write_json(join_path(out_dir, "summary.json"), doc);
  }
  return summary;
}

MirageSummary run_mirage(const ExperimentConfig& config,
                         const std::string& out_dir) {
  Pipeline pipe = make_pipeline(config);

  MirageSummary summary;
  summary.omega = pipe.ctx.omega;
  summary.uncorrected = make_report(fit_uncorrected(pipe.problem),
                                    pipe.source.position, pipe.source.moment);
  set_basis(pipe.problem, pipe.basis);
  summary.corrected = make_report(fit_corrected(pipe.problem),
                                  pipe.source.position, pipe.source.moment);

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_meta(out_dir, pipe.ctx);
    const ImageGrid& image = pipe.problem.image;
    std::vector<std::vector<std::string>> grid_rows;
    for (int j = 0; j < image.points.cols(); ++j)
      grid_rows.push_back({format_full(image.points(0, j)),
                           format_full(image.points(1, j)),
                           std::to_string(int(image.mask[j])),
                           format_full(image.values(0, j).real()),
                           format_full(image.values(0, j).imag()),
                           format_full(image.values(1, j).real()),
                           format_full(image.values(1, j).imag())});
    write_csv(join_path(out_dir, "image.csv"),
              {"x", "y", "mask", "ix_re", "ix_im", "iy_re", "iy_im"},
              grid_rows);
    write_csv(join_path(out_dir, "fits.csv"), kFitHeader,
              {fit_row("uncorrected", summary.uncorrected),
               fit_row("corrected", summary.corrected)});
    std::vector<std::vector<std::string>> amp_rows;
    const Eigen::VectorXcd& amps = summary.corrected.result.mode_amplitudes;
    for (int n = 0; n < amps.size(); ++n)
      amp_rows.push_back({std::to_string(n + 1),
                          format_full(amps[n].real()),
                          format_full(amps[n].imag()),
                          format_full(std::abs(amps[n]))});
    write_csv(join_path(out_dir, "amplitudes.csv"),
              {"mode", "alpha_re", "alpha_im", "alpha_abs"}, amp_rows);
  }
  return summary;
}

std::vector<DistanceRow> run_distance_sweep(const ExperimentConfig& config,
                                            const std::string& out_dir) {
  if (config.sweep_positions.empty())
    throw std::invalid_argument("run_distance_sweep: no sweep positions");
  ExperimentContext ctx = make_context(config);
  const ModeBasis basis = make_mode_basis(ctx, config.n_modes);
  // One reconstruction window for every row, centered on the particle, the
  // same way the single-emitter experiment sets it up; the sweep positions
  // are expected to stay inside it.
  const ImageGrid geometry =
      make_image_grid(config.shape.center, config.grid_half_width,
                      config.grid_side, &ctx.mesh);
  const FitWindow window{config.shape.center, config.grid_half_width};

  std::vector<DistanceRow> rows;
  for (const Eigen::Vector2d& position : config.sweep_positions) {
    DipoleSource source{position, config.source_moment.normalized(),
                        ctx.omega};
    const BiePair solution = solve_transmission(ctx.mesh, ctx.medium, source);
    const FarFieldData data = measure(ctx.mesh, ctx.medium, source, solution,
                                      ctx.ring_radius, config.n_sensors);
    LocalizationProblem problem =
        make_problem(data, ctx.medium, geometry, window, {}, config.fit);
    const FitReport uncorrected = make_report(
        fit_uncorrected(problem), source.position, source.moment);
    set_basis(problem, basis);
    const FitReport corrected = make_report(
        fit_corrected(problem), source.position, source.moment);

    rows.push_back({position, node_distance(ctx.mesh, position) * 1e9,
                    uncorrected.error.position_nm,
                    corrected.error.position_nm,
                    uncorrected.error.orientation_deg,
                    corrected.error.orientation_deg});
  }

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_meta(out_dir, ctx);
    std::vector<std::vector<std::string>> csv_rows;
    for (const DistanceRow& row : rows)
      csv_rows.push_back({format_full(row.distance_nm),
                          format_full(row.uncorrected_nm),
                          format_full(row.corrected_nm),
                          format_full(row.uncorrected_deg),
                          format_full(row.corrected_deg)});
    write_csv(join_path(out_dir, "distance.csv"),
              {"distance_nm", "err_uncorr_nm", "err_corr_nm",
               "angerr_uncorr_deg", "angerr_corr_deg"},
              csv_rows);
  }
  return rows;
}

NoiseSummary run_noise_sweep(const ExperimentConfig& config,
                             const std::string& out_dir) {
  if (config.noise_levels.empty())
    throw std::invalid_argument("run_noise_sweep: no noise levels");
  if (config.noise_realizations < 1)
    throw std::invalid_argument("run_noise_sweep: need >= 1 realization");
  Pipeline pipe = make_pipeline(config);

  const int n_levels = static_cast<int>(config.noise_levels.size());
  const int n_real = config.noise_realizations;
  NoiseSummary summary;
  summary.levels = config.noise_levels;
  summary.errors_nm.assign(n_levels, std::vector<double>(n_real, 0.0));
  std::vector<std::vector<double>> orientation(
      n_levels, std::vector<double>(n_real, 0.0));
  std::vector<std::vector<double>> uncorrected(
      n_levels, std::vector<double>(n_real, 0.0));

  parallel_for(n_levels * n_real, config.threads, [&](int job) {
    const int level = job / n_real;
    const int realization = job % n_real;
    LocalizationProblem local = pipe.problem;
    const double sigma0 = config.noise_levels[level];
    if (sigma0 != 0.0) {
      FarFieldData data = pipe.clean;
      add_noise(data, sigma0, mix_seed(config.seed, level, realization));
      set_data(local, data);
    }
    set_basis(local, pipe.basis);
    const FitReport corrected = make_report(
        fit_corrected(local), pipe.source.position, pipe.source.moment);
    summary.errors_nm[level][realization] = corrected.error.position_nm;
    orientation[level][realization] = corrected.error.orientation_deg;
    if (config.noise_fit_uncorrected) {
      set_basis(local, {});
      const FitReport plain = make_report(
          fit_uncorrected(local), pipe.source.position, pipe.source.moment);
      uncorrected[level][realization] = plain.error.position_nm;
    }
  });

  for (int level = 0; level < n_levels; ++level)
    summary.medians_nm.push_back(median(summary.errors_nm[level]));
  summary.spearman = spearman_rho(summary.levels, summary.medians_nm);

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_meta(out_dir, pipe.ctx);
    std::vector<std::string> header = {"sigma0", "realization", "seed",
                                       "corrected_nm", "orientation_deg"};
    if (config.noise_fit_uncorrected) header.push_back("uncorrected_nm");
    std::vector<std::vector<std::string>> rows;
    for (int level = 0; level < n_levels; ++level)
      for (int r = 0; r < n_real; ++r) {
        std::vector<std::string> row = {
            format_full(config.noise_levels[level]), std::to_string(r),
            std::to_string(mix_seed(config.seed, level, r)),
            format_full(summary.errors_nm[level][r]),
            format_full(orientation[level][r])};
        if (config.noise_fit_uncorrected)
          row.push_back(format_full(uncorrected[level][r]));
        rows.push_back(std::move(row));
      }
    write_csv(join_path(out_dir, "noise.csv"), header, rows);

    std::vector<std::vector<std::string>> stat_rows;
    for (int level = 0; level < n_levels; ++level) {
      const BoxStats stats = box_stats(summary.errors_nm[level]);
      std::string outliers;
      for (std::size_t i = 0; i < stats.outliers.size(); ++i) {
        if (i) outliers += ';';
        outliers += format_full(stats.outliers[i]);
      }
      stat_rows.push_back({format_full(config.noise_levels[level]),
                           format_full(stats.whisker_low),
                           format_full(stats.q1), format_full(stats.median),
                           format_full(stats.q3),
                           format_full(stats.whisker_high), outliers});
    }
    write_csv(join_path(out_dir, "noise_stats.csv"),
              {"sigma0", "whisker_low_nm", "q1_nm", "median_nm", "q3_nm",
               "whisker_high_nm", "outliers_nm"},
              stat_rows);
  }
  return summary;
}

std::vector<TableRow> run_mode_table(const ExperimentConfig& config,
                                     const std::string& out_dir) {
  if (config.table_sizes.empty())
    throw std::invalid_argument("run_mode_table: no table sizes");
  ExperimentConfig widened = config;
  widened.n_modes = *std::max_element(config.table_sizes.begin(),
                                      config.table_sizes.end());
  Pipeline pipe = make_pipeline(widened);

  std::vector<TableRow> rows;
  for (int n : config.table_sizes) {
    if (n < 1 || n > pipe.basis.n_modes())
      throw std::invalid_argument("run_mode_table: bad table size");
    ModeBasis subset;
    subset.farfields = pipe.basis.farfields.leftCols(n);
    subset.gains = pipe.basis.gains.head(n);
    set_basis(pipe.problem, std::move(subset));
    const FitReport corrected = make_report(
        fit_corrected(pipe.problem), pipe.source.position, pipe.source.moment);
    rows.push_back({n, corrected.error.position_nm,
                    corrected.error.orientation_deg});
  }

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_meta(out_dir, pipe.ctx);
    std::vector<std::vector<std::string>> csv_rows;
    for (const TableRow& row : rows)
      csv_rows.push_back({std::to_string(row.n_modes),
                          format_full(row.corrected_deg),
                          format_full(row.corrected_nm)});
    write_csv(join_path(out_dir, "mode_table.csv"),
              {"n_modes", "angle_deg", "position_nm"}, csv_rows);
  }
  return rows;
}

}  // namespace mirage
