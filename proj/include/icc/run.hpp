#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icc/config.hpp"
#include "icc/equilibrium.hpp"
#include "icc/imaging.hpp"
#include "icc/modes.hpp"

namespace icc {

// Comma-separated table. Every column header is "name[unit]"; "[1]" marks a
// dimensionless number and "[text]" a label. Numbers use %.17g.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row();
  CsvTable& add(double value);
  CsvTable& add(long long value);
  CsvTable& add(std::string_view text);
  std::size_t size() const { return rows_.size(); }
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_number(double value);
// True when every field of a header line carries a bracketed unit.
bool header_has_units(std::string_view header_line);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

struct OutputFile {
  std::string path;      // relative to the run directory
  std::string checksum;  // FNV-1a 64, hex
};

struct RunManifest {
  std::string version;
  std::string protocol;
  std::string config_hash;
  std::optional<std::uint64_t> seed;
  std::string start_time;  // UTC, ISO 8601
  std::string end_time;
  std::string directory;
  std::vector<OutputFile> outputs;
  int exit_code = 0;
  std::string error_kind;  // config | physics | io
  std::string error_message;

  std::string json() const;
};

const char* toolkit_version();

// ICC_OUTPUT_ROOT, when set, is prepended to a relative output directory.
inline constexpr const char* kOutputRootVariable = "ICC_OUTPUT_ROOT";
std::string resolve_output_directory(const OutputSpec& output);

// Relaxed crystal for the configured species and trap (the start comes
// from stream 0 of the seed).
EquilibriumResult relax_for(const ExperimentConfig& config);
EquilibriumResult relax_for(const ExperimentConfig& config, const TrapConfig& trap);

// Full spectrum: rotating-frame (gyroscopic) for Penning, Hessian otherwise.
ModeSpectrum spectrum_for(const ExperimentConfig& config, const EquilibriumResult& eq);
ModeSpectrum spectrum_for(const ExperimentConfig& config, const TrapConfig& trap, const EquilibriumResult& eq);

struct ScanRow {
  double value = 0.0;
  StructureLabel label = StructureLabel::linear;
  double energy = 0.0;            // J
  double lowest_frequency = 0.0;  // rad/s, NaN when the spectrum failed
  bool converged = false;
  std::vector<Vec3> positions;
};

// Trap with the scan parameter set to `value`.
TrapConfig scan_trap(const ExperimentConfig& config, double value);
// Each point relaxes from scratch with its own seed stream.
std::vector<ScanRow> run_scan(const ExperimentConfig& config);

struct PowerLawFit {
  double exponent = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};
// Least squares on log y = log a + b log x over points with x, y > 0.
PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

struct QuenchRun {
  double duration = 0.0;
  std::size_t seed_index = 0;
  std::size_t defects = 0;
  std::size_t odd = 0;
  std::size_t extended = 0;
};

struct QuenchSweep {
  std::vector<QuenchRun> runs;
  std::vector<double> durations;
  std::vector<double> mean_defects;
  std::vector<double> standard_error;
  PowerLawFit fit;
};

// Every (duration, seed) pair runs on its own stream; pairs run in parallel.
QuenchSweep run_quench_sweep(const ExperimentConfig& config);

// Trajectory samples in the lab frame for the image protocol.
std::vector<TrajectorySample> image_samples(const ExperimentConfig& config, const EquilibriumResult& eq);
Image image_for(const ExperimentConfig& config);

// Executes the protocol and writes tables, images and manifest.json into
// the output directory. Module errors are caught and recorded in the
// manifest (exit_code 1 config, 2 physics, 3 I/O).
RunManifest run(const ExperimentConfig& config);

}  // namespace icc
