#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mirage/localize.hpp"

namespace mirage {

// Complete description of one experiment run.  Everything an output file
// depends on lives here, so a config hash pins the run.
struct ExperimentConfig {
  std::string name = "experiment";
  CurveSpec shape;
  int mesh_size = 256;

  // Operating frequency: a fixed value, or the tabulated resonance of the
  // given mode (1-based index into the sorted spectrum).
  bool omega_fixed = false;
  double omega_value = 0.0;
  int resonance_mode = 1;

  Eigen::Vector2d source_position{0.0, 0.0};
  Eigen::Vector2d source_moment{1.0, 0.0};

  double ring_radius_factor = 3000.0;  // sensor radius in units of scale
  int n_sensors = 256;

  double grid_half_width = 150e-9;
  int grid_side = 61;

  int n_modes = 6;  // basis images used by the corrected fit
  OptimizerSettings fit;

  std::vector<double> noise_levels;  // relative sigma0 values
  int noise_realizations = 100;
  std::uint64_t seed = 1;
  bool noise_fit_uncorrected = false;

  std::vector<Eigen::Vector2d> sweep_positions;
  std::vector<int> table_sizes;

  int threads = 1;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Canonical field-by-field serialization and its FNV-1a hash.
std::string canonical_config(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

// Shortest text that round-trips a double exactly.
std::string format_full(double value);
// Minimal CSV writer: fields containing separators or quotes are quoted,
// rows end in CRLF, numbers are written by the caller via format_full.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Runs body(0..count-1) on a small worker pool; count and thread count of
// one degenerate to a plain loop.  The first exception wins and rethrows.
void parallel_for(int count, int n_threads,
                  const std::function<void(int)>& body);

double median(std::vector<double> values);
// Spearman rank correlation with average ranks on ties.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

// Mesh, spectrum and resolved operating frequency for a config.
struct ExperimentContext {
  ExperimentConfig config;
  BoundaryMesh mesh;
  DrudeMedium medium;
  NpSpectrum spectrum;
  ResonanceTable resonances;
  double omega = 0.0;
  double ring_radius = 0.0;
};

ExperimentContext make_context(const ExperimentConfig& config);

// Ring samples of the first n_modes mode fields at the context frequency,
// paired with each mode's resonance factor 1/tau_n(omega).
ModeBasis make_mode_basis(const ExperimentContext& ctx, int n_modes);

// Forward products shared by the experiment drivers: solved densities,
// clean sensor data, the ready-to-fit problem (basis detached so the
// uncorrected fit can run on it), and the mode basis for the corrected one.
struct Pipeline {
  ExperimentContext ctx;
  DipoleSource source;
  BiePair solution;
  FarFieldData clean;
  ImageGrid geometry;
  FitWindow window;
  ModeBasis basis;
  LocalizationProblem problem;
};

Pipeline make_pipeline(const ExperimentConfig& config);

struct FitReport {
  LocalizationResult result;
  LocalizationError error;
};

// Mode spectrum, resonance tabulation, and a gallery of exterior mode
// fields at the resolved frequency.  Writes modes.csv, mode_fields.csv and
// summary.json when out_dir is nonempty; every driver treats an empty
// out_dir as "no files".
struct ModesSummary {
  Eigen::VectorXd eigenvalues;
  ResonanceTable resonances;
  double omega = 0.0;
};

ModesSummary run_modes(const ExperimentConfig& config,
                       const std::string& out_dir = {});

// One emitter, one image, both fits.  Writes image.csv and fits.csv.
struct MirageSummary {
  double omega = 0.0;
  FitReport uncorrected;
  FitReport corrected;
};

MirageSummary run_mirage(const ExperimentConfig& config,
                         const std::string& out_dir = {});

// Both fits per emitter position, with the grid recentered on a coarse
// prescan peak so distant emitters stay inside the window.  Writes
// distance.csv.
struct DistanceRow {
  Eigen::Vector2d position{0.0, 0.0};
  double distance_nm = 0.0;  // emitter distance to the particle boundary
  double uncorrected_nm = 0.0;
  double corrected_nm = 0.0;
  double uncorrected_deg = 0.0;
  double corrected_deg = 0.0;
};

std::vector<DistanceRow> run_distance_sweep(const ExperimentConfig& config,
                                            const std::string& out_dir = {});

// Corrected-fit error statistics under measurement noise.  Writes noise.csv
// and noise_medians.csv.
struct NoiseSummary {
  std::vector<double> levels;
  std::vector<std::vector<double>> errors_nm;  // [level][realization]
  std::vector<double> medians_nm;
  double spearman = 0.0;
};

NoiseSummary run_noise_sweep(const ExperimentConfig& config,
                             const std::string& out_dir = {});

// Corrected-fit error as a function of basis size.  Writes mode_table.csv.
struct TableRow {
  int n_modes = 0;
  double corrected_nm = 0.0;
  double corrected_deg = 0.0;
};

std::vector<TableRow> run_mode_table(const ExperimentConfig& config,
                                     const std::string& out_dir = {});

}  // namespace mirage
