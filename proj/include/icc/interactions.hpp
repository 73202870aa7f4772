#pragma once

#include <span>
#include <vector>

#include "icc/linalg.hpp"
#include "icc/state.hpp"
#include "icc/trap.hpp"
#include "icc/vec3.hpp"

namespace icc {

// Pairs closer than this abort the computation with a PhysicsError.
inline constexpr double kMinimumSeparation = 1e-9;  // m

struct EnergyBreakdown {
  double trap_energy = 0.0;     // J
  double coulomb_energy = 0.0;  // J
  double total = 0.0;           // J
};

// Reference kernel: one pass over i < j pairs in ascending order, applying
// each pair force to both ions. Bit-reproducible.
void coulomb_forces_serial(std::span<const Vec3> positions, std::span<const double> charges, std::span<Vec3> out);

// OpenMP kernel: each thread owns whole rows i and sums over all j != i in
// ascending j. Independent of thread count; agrees with the serial kernel to
// rounding (about 1e-12 relative).
void coulomb_forces_parallel(std::span<const Vec3> positions, std::span<const double> charges, std::span<Vec3> out);

// Picks the parallel kernel for large N when more than one thread is
// available and we are not already inside a parallel region.
void coulomb_forces(std::span<const Vec3> positions, std::span<const double> charges, std::span<Vec3> out);

std::vector<Vec3> coulomb_forces(std::span<const Vec3> positions, std::span<const double> charges);

double coulomb_energy(std::span<const Vec3> positions, std::span<const double> charges);

// Static-confinement energy plus Coulomb energy. Throws PhysicsError for a
// full-drive trap, which has no conserved potential.
EnergyBreakdown total_potential_energy(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap);

// Analytic second derivatives (N/m) of the static-confinement plus Coulomb
// energy, 3N x 3N with ion-major ordering (x0, y0, z0, x1, ...).
Matrix potential_hessian(std::span<const Vec3> positions, std::span<const double> charges,
                         std::span<const StaticWell> wells);
Matrix potential_hessian(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap);

}  // namespace icc
