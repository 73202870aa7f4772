#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "icc/diagnostics.hpp"
#include "icc/rng.hpp"
#include "icc/state.hpp"
#include "icc/trap.hpp"

namespace icc {

enum class BeamGeometry {
  uniform,        // friction on all components of every cooled ion
  axial,          // beam along the trap axis: friction on v_z only
  radial_offset,  // beam along x displaced by `beam_offset` along y (lab frame)
};
const char* to_string(BeamGeometry geometry);

// Doppler cooling reduced to friction plus white recoil noise. The noise is
// tied to the friction by fluctuation-dissipation so a cooled ion settles at
// `target_temperature`. Dark ions (cooled = false) get neither.
struct CoolingModel {
  double friction_rate = 0.0;         // 1/s
  double target_temperature = 1e-3;   // K
  BeamGeometry beam = BeamGeometry::uniform;
  double beam_offset = 0.0;           // m
  double beam_waist = 100e-6;         // m, 1/e^2 intensity radius
  double extra_heating_rate = 0.0;    // K/s per component, applied to every ion

  // sqrt(2 gamma k T / m): rms velocity kick per component per sqrt(second).
  double recoil_kick_rms(double mass) const;
  // Friction weight at lab-frame position r (1 except for radial_offset).
  double beam_weight(const Vec3& lab_position) const;

  friend bool operator==(const CoolingModel&, const CoolingModel&) = default;
};

void validate_cooling(const CoolingModel& cooling);

// Largest stable-and-accurate step: 2 pi / (50 w_max) with w_max a
// Gershgorin bound on the mass-weighted force-constant matrix (plus the
// gyro rate in a Penning trap), and 2 pi / (50 Omega) under full drive.
double max_timestep(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap);

// Trap as a function of time; used by quenches.
using TrapProgram = std::function<TrapConfig(double time)>;

// Splitting integrator, one step = kick, half drift, thermostat (exact gyro
// rotation then exact Ornstein-Uhlenbeck update), half drift, kick. The
// force at the end of a step is cached for the next step.
class Integrator {
 public:
  Integrator(SpeciesTable species, TrapConfig trap, CoolingModel cooling = {});
  Integrator(SpeciesTable species, TrapProgram program, CoolingModel cooling = {});

  // Throws ConfigError if dt is not positive or exceeds the full-drive RF
  // limit, PhysicsError if two ions come within 1 nm.
  void step(SystemState& state, double dt, Rng& rng);

  const SpeciesTable& species() const { return species_; }
  TrapConfig trap_at(double time) const;

 private:
  void forces(const SystemState& state, double time, std::vector<Vec3>& out);

  SpeciesTable species_;
  std::optional<TrapConfig> fixed_trap_;
  TrapProgram program_;
  CoolingModel cooling_;
  std::vector<Vec3> force_;
  std::vector<Vec3> cached_positions_;
  double cached_time_ = 0.0;
  bool cache_valid_ = false;
  std::vector<double> charges_;
  std::vector<double> masses_;
};

// One step without force caching.
void step(SystemState& state, const SpeciesTable& species, const TrapConfig& trap, const CoolingModel& cooling,
          double dt, Rng& rng);

struct Observation {
  double time = 0.0;                // s
  double temperature = 0.0;         // K, all ions, secular convention
  double kinetic_energy = 0.0;      // J
  double trap_energy = 0.0;         // J, NaN under full drive
  double coulomb_energy = 0.0;      // J
  double total_energy = 0.0;        // J, NaN under full drive
};

using Observer = std::function<void(const Observation&, const SystemState&)>;

struct EvolveOptions {
  double duration = 0.0;  // s
  double dt = 0.0;        // s, 0 picks max_timestep / 4
  // Observe every `sample_every` steps (and at t = 0); 0 disables sampling.
  std::size_t sample_every = 0;
};

// Runs ceil(duration / dt) equal steps (never longer than dt). Under full
// drive the reported temperature uses velocities averaged over the last RF
// period so the micromotion is excluded.
void evolve(SystemState& state, Integrator& integrator, const EvolveOptions& options, Rng& rng,
            const Observer& observer = {});
void evolve(SystemState& state, const SpeciesTable& species, const TrapConfig& trap, const CoolingModel& cooling,
            const EvolveOptions& options, Rng& rng, const Observer& observer = {});

// Observation record at the current state (energies need a static trap).
Observation observe(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap);

// T = sum m v^2 / (3 N k) over the selected ions (empty filter: all ions).
// Throws ConfigError when nothing is selected.
double kinetic_temperature(const SystemState& state, const SpeciesTable& species,
                           const std::vector<std::size_t>& species_filter = {});
// Same with explicit velocities in place of state.velocities.
double kinetic_temperature(const SystemState& state, const std::vector<Vec3>& velocities,
                           const SpeciesTable& species, const std::vector<std::size_t>& species_filter = {});

// Maxwell-Boltzmann velocities at `temperature` for every ion.
void thermalize_velocities(SystemState& state, const SpeciesTable& species, double temperature, Rng& rng);

// Running mean of the velocities over the last `window` steps; used to strip
// micromotion (window = one RF period) before taking a temperature.
class VelocityAverager {
 public:
  explicit VelocityAverager(std::size_t window) : window_(window) {}
  void push(const std::vector<Vec3>& velocities);
  bool full() const { return count_ >= window_; }
  std::vector<Vec3> mean() const;

 private:
  std::size_t window_;
  std::size_t count_ = 0;
  std::size_t head_ = 0;
  std::vector<std::vector<Vec3>> ring_;
  std::vector<Vec3> sum_;
};

enum class QuenchControl { axial_frequency, radial_frequency };
enum class QuenchShape { linear, smoothstep };

// Ramp of one trap frequency of the reference species. Radial values are
// the mean transverse frequency (the split by radial_asymmetry is kept).
struct QuenchSchedule {
  QuenchControl control = QuenchControl::radial_frequency;
  double start_value = 0.0;  // rad/s
  double end_value = 0.0;    // rad/s
  double duration = 0.0;     // s
  QuenchShape shape = QuenchShape::linear;

  double value_at(double time) const;

  friend bool operator==(const QuenchSchedule&, const QuenchSchedule&) = default;
};

// Linear trap with the scheduled frequency applied for reference species
// `reference` at `time` (end value after the ramp).
TrapConfig quench_trap(const TrapConfig& base, const IonSpecies& reference, const QuenchSchedule& schedule,
                       double time);

// Soft-direction anisotropy w_soft^2 / w_z^2 of `trap` for `species`.
double soft_anisotropy(const LinearRfTrap& trap, const IonSpecies& species);

struct QuenchOptions {
  double dt = 0.0;            // s, 0 picks min(max_timestep at start, at end) / 4
  double hold_factor = 100.0; // hold for hold_factor / gamma
  bool relax_before_count = true;
  // Draw Maxwell-Boltzmann velocities at the cooling target before the ramp.
  bool thermal_start = true;
};

struct QuenchResult {
  SystemState final_state;  // after hold (before the counting relaxation)
  std::vector<Vec3> counted_positions;
  DefectReport defects;
  double noise_floor = 0.0;   // m
  double dt = 0.0;            // s
  std::size_t steps = 0;
};

// Ramps the trap across the linear -> zigzag point, holds, then counts
// domain walls. All ions must be of the reference species species[0] for
// the crossing check. Throws ConfigError if the schedule does not start on
// the linear side and end on the zigzag side, or if gamma is zero.
QuenchResult run_quench(const SystemState& initial, const SpeciesTable& species, const TrapConfig& base,
                        const QuenchSchedule& schedule, const CoolingModel& cooling, Rng& rng,
                        const QuenchOptions& options = {});

// Lab-frame Penning integrator (Boris rotation for the magnetic field) with
// an optional rotating wall. Used to check that a crystal follows the wall.
class PenningLabIntegrator {
 public:
  PenningLabIntegrator(SpeciesTable species, PenningTrap trap);
  void step(SystemState& lab_state, double dt);

 private:
  void electric_forces(const SystemState& s, double time, std::vector<Vec3>& out) const;

  SpeciesTable species_;
  PenningTrap trap_;
  std::vector<double> charges_;
  std::vector<Vec3> force_;
};

// Rotating-frame state (positions and velocities) expressed in the lab frame.
SystemState rotating_state_to_lab(const SystemState& rotating, const PenningTrap& trap);

// Mean rotation angle of the crystal about z relative to `reference`
// (same ions, same order), from the angular displacement of each ion
// weighted by its squared radius. Radians, positive counter-clockwise.
double rotation_angle(const std::vector<Vec3>& reference, const std::vector<Vec3>& current);

}  // namespace icc
