// Command-line front end: each subcommand loads a JSON experiment config,
// runs one driver from the harness, writes CSV outputs, and prints a JSON
// summary on stdout.  Failures print {"error": ...} and exit nonzero.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mirage/harness.hpp"

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir,
                  "output directory (default out/<config name>)");
  cmd->add_option("--seed", opts.seed, "override the noise seed");
  cmd->add_option("--threads", opts.threads, "override the worker count");
}

mirage::ExperimentConfig load(const CommonOptions& opts) {
  mirage::ExperimentConfig config = mirage::load_config(opts.config_path);
  if (opts.seed >= 0) config.seed = static_cast<std::uint64_t>(opts.seed);
  if (opts.threads > 0) config.threads = opts.threads;
  return config;
}

std::string out_dir(const CommonOptions& opts,
                    const mirage::ExperimentConfig& config) {
  return opts.out_dir.empty() ? "out/" + config.name : opts.out_dir;
}

json fit_json(const mirage::FitReport& report) {
  return json{{"x", report.result.position.x()},
              {"y", report.result.position.y()},
              {"error_nm", report.error.position_nm},
              {"orientation_deg", report.error.orientation_deg},
              {"relative_residual", report.result.relative_residual},
              {"evaluations", report.result.n_evaluations},
              {"converged", report.result.converged}};
}

void emit(const json& summary) { std::cout << summary.dump() << "\n"; }

void cmd_modes(const CommonOptions& opts) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  const mirage::ModesSummary summary = mirage::run_modes(config, dir);
  json eigenvalues = json::array();
  for (int n = 0; n < summary.eigenvalues.size(); ++n)
    eigenvalues.push_back(summary.eigenvalues[n]);
  json resonances = json::array();
  for (const mirage::ResonanceEntry& entry : summary.resonances.entries)
    resonances.push_back({{"mode", entry.mode},
                          {"omega", entry.omega},
                          {"tau_abs", entry.tau_abs}});
  emit({{"command", "modes"},
        {"omega", summary.omega},
        {"eigenvalues", eigenvalues},
        {"resonances", resonances},
        {"omitted", summary.resonances.omitted},
        {"out", dir}});
}

void cmd_mirage(const CommonOptions& opts, bool fits_only) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  const mirage::MirageSummary summary = mirage::run_mirage(config, dir);
  json result{{"command", fits_only ? "localize" : "mirage"},
              {"uncorrected", fit_json(summary.uncorrected)},
              {"corrected", fit_json(summary.corrected)},
              {"out", dir}};
  if (!fits_only) result["omega"] = summary.omega;
  emit(result);
}

void cmd_sweep_distance(const CommonOptions& opts) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  json rows = json::array();
  for (const mirage::DistanceRow& row :
       mirage::run_distance_sweep(config, dir))
    rows.push_back({{"x", row.position.x()},
                    {"y", row.position.y()},
                    {"distance_nm", row.distance_nm},
                    {"uncorrected_nm", row.uncorrected_nm},
                    {"corrected_nm", row.corrected_nm},
                    {"uncorrected_deg", row.uncorrected_deg},
                    {"corrected_deg", row.corrected_deg}});
  emit({{"command", "sweep-distance"}, {"rows", rows}, {"out", dir}});
}

void cmd_sweep_noise(const CommonOptions& opts) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  const mirage::NoiseSummary summary = mirage::run_noise_sweep(config, dir);
  emit({{"command", "sweep-noise"},
        {"levels", summary.levels},
        {"medians_nm", summary.medians_nm},
        {"spearman", summary.spearman},
        {"out", dir}});
}

void cmd_mode_table(const CommonOptions& opts) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  json rows = json::array();
  for (const mirage::TableRow& row : mirage::run_mode_table(config, dir))
    rows.push_back({{"n_modes", row.n_modes},
                    {"angle_deg", row.corrected_deg},
                    {"position_nm", row.corrected_nm}});
  emit({{"command", "mode-table"}, {"rows", rows}, {"out", dir}});
}

void cmd_forward(const CommonOptions& opts, bool with_image) {
  const mirage::ExperimentConfig config = load(opts);
  const std::string dir = out_dir(opts, config);
  mirage::ExperimentContext ctx = mirage::make_context(config);
  mirage::DipoleSource source{config.source_position,
                              config.source_moment.normalized(), ctx.omega};
  const mirage::BiePair solution =
      mirage::solve_transmission(ctx.mesh, ctx.medium, source);
  const mirage::FarFieldData data =
      mirage::measure(ctx.mesh, ctx.medium, source, solution, ctx.ring_radius,
                      config.n_sensors);

  std::filesystem::create_directories(dir);
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < data.sensors.cols(); ++i)
    rows.push_back({mirage::format_full(data.sensors(0, i)),
                    mirage::format_full(data.sensors(1, i)),
                    mirage::format_full(data.samples[i].real()),
                    mirage::format_full(data.samples[i].imag())});
  mirage::write_csv(dir + "/farfield.csv", {"x", "y", "u_re", "u_im"}, rows);

  json summary{{"command", with_image ? "image" : "forward"},
               {"omega", ctx.omega},
               {"residual", solution.residual},
               {"rcond", solution.rcond},
               {"sensors", static_cast<int>(data.sensors.cols())},
               {"out", dir}};

  if (with_image) {
    mirage::ImageGrid image =
        mirage::make_image_grid(config.shape.center, config.grid_half_width,
                                config.grid_side, &ctx.mesh);
    mirage::backpropagate(data, ctx.medium, image);
    std::vector<std::vector<std::string>> grid_rows;
    int peak = -1;
    double peak_mag = -1.0;
    for (int j = 0; j < image.points.cols(); ++j) {
      grid_rows.push_back({mirage::format_full(image.points(0, j)),
                           mirage::format_full(image.points(1, j)),
                           std::to_string(int(image.mask[j])),
                           mirage::format_full(image.values(0, j).real()),
                           mirage::format_full(image.values(0, j).imag()),
                           mirage::format_full(image.values(1, j).real()),
                           mirage::format_full(image.values(1, j).imag())});
      if (!image.mask[j] && image.values.col(j).norm() > peak_mag) {
        peak_mag = image.values.col(j).norm();
        peak = j;
      }
    }
    mirage::write_csv(dir + "/image.csv",
                      {"x", "y", "mask", "ix_re", "ix_im", "iy_re", "iy_im"},
                      grid_rows);
    summary["active_points"] = image.active_points();
    if (peak >= 0)
      summary["peak"] = {image.points(0, peak), image.points(1, peak)};
  }
  emit(summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dipole localization near a resonant nanoparticle"};
  app.require_subcommand(1);

  CommonOptions opts;
  add_common(app.add_subcommand("modes", "spectrum and resonance table"),
             opts);
  add_common(app.add_subcommand(
                 "mirage", "image one emitter and run both fits"),
             opts);
  add_common(app.add_subcommand(
                 "sweep-distance", "both fits across emitter positions"),
             opts);
  add_common(app.add_subcommand(
                 "sweep-noise", "corrected-fit statistics under noise"),
             opts);
  add_common(app.add_subcommand("mode-table", "fit error versus basis size"),
             opts);
  add_common(app.add_subcommand("forward", "solve and record sensor data"),
             opts);
  add_common(app.add_subcommand("image", "forward plus backpropagation"),
             opts);
  add_common(app.add_subcommand("localize", "fit positions only"), opts);

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("modes")) cmd_modes(opts);
    if (app.got_subcommand("mirage")) cmd_mirage(opts, false);
    if (app.got_subcommand("sweep-distance")) cmd_sweep_distance(opts);
    if (app.got_subcommand("sweep-noise")) cmd_sweep_noise(opts);
    if (app.got_subcommand("mode-table")) cmd_mode_table(opts);
    if (app.got_subcommand("forward")) cmd_forward(opts, false);
    if (app.got_subcommand("image")) cmd_forward(opts, true);
    if (app.got_subcommand("localize")) cmd_mirage(opts, true);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
