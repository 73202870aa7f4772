#pragma once

#include <cstdint>
#include <vector>

#include "icc/interactions.hpp"
#include "icc/rng.hpp"
#include "icc/state.hpp"
#include "icc/trap.hpp"

namespace icc {

struct MinimizerOptions {
  // Convergence: largest per-ion residual force below this (N).
  double force_tolerance = 1e-19;
  int max_iterations = 50000;
  // Simulated-annealing prelude (Metropolis over a geometric ladder).
  bool anneal = false;
  double anneal_start_temperature = 10e-3;  // K
  double anneal_end_temperature = 10e-6;    // K
  int anneal_levels = 16;
  int anneal_sweeps_per_level = 60;
  // Extra independent attempts (fresh jitter / annealing stream); the lowest
  // energy result is kept.
  int restarts = 0;
  std::uint64_t seed = 0;
  // Newton steps on the analytic Hessian once the descent is close.
  bool newton_polish = true;
};

struct EquilibriumResult {
  std::vector<Vec3> positions;  // canonical order: z, then x, then y
  std::vector<std::size_t> species_index;
  EnergyBreakdown energy;
  double gradient_norm = 0.0;  // largest per-ion residual force, N
  bool converged = false;
  int restarts_used = 0;
  int iterations = 0;

  SystemState state() const;
};

// Length unit of a string: l = (e^2 / (4 pi eps0 m wz^2))^(1/3).
double string_length_scale(const IonSpecies& species, double axial);

// Two-ion equilibrium spacing (2 k_e q^2 / (m wz^2))^(1/3).
double two_ion_spacing(const IonSpecies& species, double axial);

// Axial equilibrium coordinates (m) of an N-ion string, ascending and
// antisymmetric about 0. Damped Newton on the convex 1D energy.
std::vector<double> string_positions(int n, const IonSpecies& species, double axial);

// Default start: coarse axial lattice with 0.1 um Gaussian jitter.
SystemState axial_lattice_start(const std::vector<std::size_t>& species_index, const SpeciesTable& species,
                                const TrapConfig& trap, std::uint64_t seed);

// Random start inside a sphere sized for the expected crystal.
SystemState cloud_start(const std::vector<std::size_t>& species_index, const SpeciesTable& species,
                        const TrapConfig& trap, std::uint64_t seed);

// Local minimum of total_potential_energy. Never throws on non-convergence
// (converged = false); throws PhysicsError for coincident starting ions or a
// full-drive trap.
EquilibriumResult relax(const SystemState& initial, const SpeciesTable& species, const TrapConfig& trap,
                        const MinimizerOptions& options = {});

// Critical wx^2/wz^2 of an N-ion string (3 <= N <= 50), by bisection on the
// lowest transverse mode. Exactly 12/5 for N = 3.
double zigzag_critical_anisotropy(int n);

}  // namespace icc
