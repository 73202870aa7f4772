#pragma once

#include <cstddef>
#include <vector>

#include "icc/species.hpp"
#include "icc/vec3.hpp"

namespace icc {

// Positions and velocities are lab-frame for linear traps and co-rotating
// frame for Penning traps.
struct SystemState {
  std::vector<Vec3> positions;         // m
  std::vector<Vec3> velocities;        // m/s
  std::vector<std::size_t> species_index;
  double time = 0.0;  // s

  std::size_t size() const { return positions.size(); }
};

// State at rest with every ion of species 0.
SystemState make_state(std::vector<Vec3> positions, std::size_t species = 0);

// Throws ConfigError when array sizes disagree, a species index is out of
// range, or a coordinate is not finite.
void check_state(const SystemState& state, const SpeciesTable& species);

std::vector<double> charges_of(const SystemState& state, const SpeciesTable& species);
std::vector<double> masses_of(const SystemState& state, const SpeciesTable& species);

}  // namespace icc
