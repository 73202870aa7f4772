#include "icc/state.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "icc/error.hpp"

namespace icc {

SystemState make_state(std::vector<Vec3> positions, std::size_t species) {
  SystemState s;
  s.velocities.assign(positions.size(), Vec3{});
  s.species_index.assign(positions.size(), species);
  s.positions = std::move(positions);
  return s;
}

void check_state(const SystemState& state, const SpeciesTable& species) {
  const std::size_t n = state.positions.size();
  if (state.velocities.size() != n || state.species_index.size() != n) {
    throw ConfigError("state arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (state.species_index[i] >= species.size()) {
      throw ConfigError("ion " + std::to_string(i) + " references unknown species index " +
                        std::to_string(state.species_index[i]));
    }
    const auto& p = state.positions[i];
    const auto& v = state.velocities[i];
    if (!std::isfinite(p.x + p.y + p.z) || !std::isfinite(v.x + v.y + v.z)) {
      throw PhysicsError("ion " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

std::vector<double> charges_of(const SystemState& state, const SpeciesTable& species) {
  std::vector<double> q(state.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = species.at(state.species_index[i]).charge;
  return q;
}

std::vector<double> masses_of(const SystemState& state, const SpeciesTable& species) {
  std::vector<double> m(state.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = species.at(state.species_index[i]).mass;
  return m;
}

}  // namespace icc
