#include "icc/interactions.hpp"

#include <cmath>
#include <string>

#include "icc/constants.hpp"
#include "icc/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace icc {
namespace {

constexpr std::size_t kParallelThreshold = 256;
constexpr double kMinSq = kMinimumSeparation * kMinimumSeparation;

[[noreturn]] void throw_coincident(std::span<const Vec3> p, std::size_t i, std::size_t j) {
  throw PhysicsError("ions " + std::to_string(i) + " and " + std::to_string(j) + " are " +
                     std::to_string(norm(p[i] - p[j])) +
                     " m apart (< 1 nm); reduce the time step or start from an annealed state");
}

void check_sizes(std::span<const Vec3> positions, std::span<const double> charges, std::span<Vec3> out) {
  if (positions.size() != charges.size() || out.size() != positions.size()) {
    throw ConfigError("coulomb_forces: positions, charges and output sizes differ");
  }
}

}  // namespace

void coulomb_forces_serial(std::span<const Vec3> p, std::span<const double> q, std::span<Vec3> out) {
  check_sizes(p, q, out);
  const std::size_t n = p.size();
  for (auto& f : out) f = Vec3{};
  for (std::size_t i = 0; i < n; ++i) {
    const double kqi = kCoulomb * q[i];
    Vec3 fi = out[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = p[i] - p[j];
      const double r2 = dot(d, d);
      if (r2 < kMinSq) throw_coincident(p, i, j);
      const double s = kqi * q[j] / (r2 * std::sqrt(r2));
      const Vec3 fij = d * s;
      fi += fij;
      out[j] -= fij;
    }
    out[i] = fi;
  }
}

void coulomb_forces_parallel(std::span<const Vec3> p, std::span<const double> q, std::span<Vec3> out) {
  check_sizes(p, q, out);
  const auto n = static_cast<std::ptrdiff_t>(p.size());
  std::ptrdiff_t bad_i = -1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Vec3 pi = p[i];
    const double kqi = kCoulomb * q[i];
    double fx = 0.0, fy = 0.0, fz = 0.0;
    bool close = false;
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const double dx = pi.x - p[j].x;
      const double dy = pi.y - p[j].y;
      const double dz = pi.z - p[j].z;
      const double r2 = dx * dx + dy * dy + dz * dz;
      if (j == i) continue;
      close |= r2 < kMinSq;
      const double s = kqi * q[j] / (r2 * std::sqrt(r2));
      fx += s * dx;
      fy += s * dy;
      fz += s * dz;
    }
    out[i] = {fx, fy, fz};
    if (close) {
#pragma omp critical(icc_coincident)
      if (bad_i < 0 || i < bad_i) bad_i = i;
    }
  }
  if (bad_i >= 0) {
    const auto i = static_cast<std::size_t>(bad_i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j != i && dot(p[i] - p[j], p[i] - p[j]) < kMinSq) throw_coincident(p, std::min(i, j), std::max(i, j));
    }
  }
}

void coulomb_forces(std::span<const Vec3> p, std::span<const double> q, std::span<Vec3> out) {
#ifdef _OPENMP
  if (p.size() >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1) {
    coulomb_forces_parallel(p, q, out);
    return;
  }
#endif
  coulomb_forces_serial(p, q, out);
}

std::vector<Vec3> coulomb_forces(std::span<const Vec3> positions, std::span<const double> charges) {
  std::vector<Vec3> out(positions.size());
  coulomb_forces(positions, charges, out);
  return out;
}

double coulomb_energy(std::span<const Vec3> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ConfigError("coulomb_energy: positions and charges sizes differ");
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double r = norm(p[i] - p[j]);
      if (r < kMinimumSeparation) throw_coincident(p, i, j);
      row += q[j] / r;
    }
    e += kCoulomb * q[i] * row;
  }
  return e;
}

EnergyBreakdown total_potential_energy(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap) {
  if (trap.rf_mode == RfMode::full_drive) {
    throw PhysicsError("full RF drive has no conserved potential energy; use the dynamics module");
  }
  check_state(state, species);
  std::vector<StaticWell> wells;
  wells.reserve(species.size());
  for (const auto& s : species) wells.push_back(static_well(trap, s));
  EnergyBreakdown e;
  for (std::size_t i = 0; i < state.size(); ++i) e.trap_energy += wells[state.species_index[i]].energy(state.positions[i]);
  e.coulomb_energy = coulomb_energy(state.positions, charges_of(state, species));
  e.total = e.trap_energy + e.coulomb_energy;
  return e;
}

Matrix potential_hessian(std::span<const Vec3> p, std::span<const double> q, std::span<const StaticWell> wells) {
  const std::size_t n = p.size();
  if (q.size() != n || wells.size() != n) throw ConfigError("potential_hessian: size mismatch");
  Matrix h(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    h(3 * i, 3 * i) += wells[i].stiffness.x;
    h(3 * i + 1, 3 * i + 1) += wells[i].stiffness.y;
    h(3 * i + 2, 3 * i + 2) += wells[i].stiffness.z;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = p[i] - p[j];
      const double r2 = dot(d, d);
      if (r2 < kMinSq) throw_coincident(p, i, j);
      const double r = std::sqrt(r2);
      const double c = kCoulomb * q[i] * q[j] / (r2 * r);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          // d^2/dr_i^2 of c0/|d|: c0 (3 d d^T / r^5 - I / r^3)
          const double v = c * (3.0 * d[a] * d[b] / r2 - (a == b ? 1.0 : 0.0));
          h(3 * i + a, 3 * i + b) += v;
          h(3 * j + a, 3 * j + b) += v;
          h(3 * i + a, 3 * j + b) -= v;
          h(3 * j + a, 3 * i + b) -= v;
        }
      }
    }
  }
  return h;
}

Matrix potential_hessian(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap) {
  check_state(state, species);
  std::vector<StaticWell> wells;
  wells.reserve(state.size());
  for (auto s : state.species_index) wells.push_back(static_well(trap, species[s]));
  return potential_hessian(state.positions, charges_of(state, species), wells);
}

}  // namespace icc
