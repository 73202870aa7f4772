#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "icc/dynamics.hpp"
#include "icc/imaging.hpp"
#include "icc/species.hpp"
#include "icc/trap.hpp"

namespace icc {

enum class Protocol { relax, modes, evolve, quench, scan, image };
const char* to_string(Protocol protocol);
Protocol protocol_from_string(std::string_view name);

enum class StartKind { lattice, cloud };

struct SpeciesEntry {
  IonSpecies species;
  std::size_t count = 0;
  friend bool operator==(const SpeciesEntry&, const SpeciesEntry&) = default;
};

struct RelaxParams {
  bool anneal = false;
  int restarts = 0;
  std::optional<StartKind> start;  // default: lattice (linear), cloud (Penning)
  double force_tolerance = 1e-19;  // N
  friend bool operator==(const RelaxParams&, const RelaxParams&) = default;
};

struct EvolveParams {
  double duration = 0.0;             // s
  double dt = 0.0;                   // s, 0 = automatic
  std::size_t sample_every = 100;    // steps
  double initial_temperature = 0.0;  // K, Maxwell-Boltzmann start velocities
  bool from_equilibrium = true;      // relax before evolving
  friend bool operator==(const EvolveParams&, const EvolveParams&) = default;
};

struct QuenchParams {
  QuenchControl control = QuenchControl::radial_frequency;
  QuenchShape shape = QuenchShape::linear;
  double start_value = 0.0;         // rad/s
  double end_value = 0.0;           // rad/s
  std::vector<double> durations;    // s, one sweep point each
  std::size_t seeds = 1;
  double hold_factor = 100.0;
  double dt = 0.0;                  // s, 0 = automatic
  friend bool operator==(const QuenchParams&, const QuenchParams&) = default;
};

enum class ScanParameter {
  anisotropy,                  // w_soft^2 / w_z^2, linear trap
  radial_frequency,            // rad/s, linear trap
  axial_frequency,             // rad/s, either trap
  normalized_axial_frequency,  // w_z / w_c, Penning trap
  rotation_frequency,          // rad/s, Penning trap
};
const char* to_string(ScanParameter parameter);

struct ScanParams {
  ScanParameter parameter = ScanParameter::anisotropy;
  std::vector<double> values;  // SI (rad/s for frequencies)
  friend bool operator==(const ScanParams&, const ScanParams&) = default;
};

struct ImageParams {
  CameraModel camera;
  double sample_interval = 0.0;  // s, 0 = automatic (blur period / 40)
  double temperature = 0.0;      // K, thermal jitter via a cooled MD run (0 = rigid)
  bool binary = true;            // P5 or P2
  friend bool operator==(const ImageParams& a, const ImageParams& b) {
    const auto& x = a.camera;
    const auto& y = b.camera;
    return x.pixel_pitch == y.pixel_pitch && x.width == y.width && x.height == y.height &&
           x.psf_sigma == y.psf_sigma && x.start_time == y.start_time && x.exposure == y.exposure &&
           x.gate.enabled == y.gate.enabled && x.gate.phase_window == y.gate.phase_window &&
           x.gate.reference == y.gate.reference &&
           x.gate.reference_angular_frequency == y.gate.reference_angular_frequency &&
           x.gate.phase_offset == y.gate.phase_offset && x.view_axis == y.view_axis && x.center == y.center &&
           a.sample_interval == b.sample_interval && a.temperature == b.temperature && a.binary == b.binary;
  }
};

struct OutputSpec {
  std::string directory = "iccsim-out";
  bool pgm_binary = true;
  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct ExperimentConfig {
  Protocol protocol = Protocol::relax;
  std::optional<std::uint64_t> seed;
  std::vector<SpeciesEntry> species;
  TrapConfig trap;
  CoolingModel cooling;
  RelaxParams relax;
  EvolveParams evolve;
  QuenchParams quench;
  ScanParams scan;
  ImageParams image;
  OutputSpec output;

  SpeciesTable species_table() const;
  // Species index per ion, species spread evenly through the list.
  std::vector<std::size_t> ion_species() const;
  std::size_t ion_count() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Whether the protocol draws random numbers (and so needs a seed).
bool needs_seed(const ExperimentConfig& config);

// Raw key = value text grouped by section, in file order.
struct RawEntry {
  std::string key;
  std::string value;
  int line = 0;
};
using RawSection = std::pair<std::string, std::vector<RawEntry>>;
std::vector<RawSection> read_sections(std::string_view text);

// "section.key=value" override; later entries replace earlier ones.
void apply_override(std::vector<RawSection>& sections, std::string_view assignment);

ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
// Canonical text in SI (frequencies in rad/s); parse(serialize(c)) == c.
std::string serialize(const ExperimentConfig& config);

// Unit-aware scalar parsing, exposed for tests: "500 kHz" -> 2 pi 5e5.
enum class Dimension { none, frequency, length, voltage, magnetic_field, temperature, time, rate, mass,
                       field_gradient, electric_field, heating_rate, angle, force };
double parse_quantity(std::string_view text, Dimension dimension);
std::vector<double> parse_quantity_list(std::string_view text, Dimension dimension);

}  // namespace icc
