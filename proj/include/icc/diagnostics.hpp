#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icc/state.hpp"
#include "icc/trap.hpp"
#include "icc/vec3.hpp"

namespace icc {

inline constexpr double kGasLiquidGamma = 1.0;
inline constexpr double kCrystallizationGamma = 178.0;

enum class PlasmaRegime { gas, liquid, crystal_candidate };
const char* to_string(PlasmaRegime regime);

struct PlasmaReport {
  double gamma = 0.0;
  double wigner_seitz_radius = 0.0;  // m
  double number_density = 0.0;       // 1/m^3
  PlasmaRegime regime = PlasmaRegime::gas;
};

// Gamma = e^2 / (4 pi eps0 a0 k T).
double coupling_parameter(double temperature, double wigner_seitz_radius);

// a0 = (3 / (4 pi n))^(1/3) and its inverse.
double wigner_seitz(double number_density);
double density_from_wigner_seitz(double wigner_seitz_radius);

// gas: Gamma < 1; liquid: 1 <= Gamma < 178; crystal candidate: Gamma >= 178.
PlasmaRegime classify_regime(double gamma);
PlasmaReport plasma_report(double temperature, double number_density);

// n = 2 eps0 m wr (wc - wr) / q^2 for 0 <= wr <= wc.
double rotation_density(const PenningTrap& trap, const IonSpecies& species, double rotation);

// Mean density of a cloud treated as a uniform ellipsoid with the same
// second moments (semi-axes sqrt(5 var) along the principal axes).
double cloud_density(std::span<const Vec3> positions);

// Interior density from the summed Voronoi volume of interior ions,
// measured by Monte Carlo nearest-ion assignment. Interior ions are those
// within `interior_fraction` of the cloud's ellipsoidal radius.
double interior_voronoi_density(std::span<const Vec3> positions, double interior_fraction = 0.6,
                                std::size_t samples = 400000, std::uint64_t seed = 7);

enum class StructureLabel { linear, zigzag, helix, shell3d, planar };
const char* to_string(StructureLabel label);

// Rule-based shape label. Lengths are compared against 1e-3 of the median
// nearest-neighbour distance, so the label is scale invariant.
StructureLabel classify_structure(std::span<const Vec3> positions);

enum class DefectKind { odd, extended };
const char* to_string(DefectKind kind);

struct DefectReport {
  std::size_t defect_count = 0;
  std::vector<DefectKind> kinds;
  // Chain-index interval [first, last] straddling each domain wall.
  std::vector<std::pair<std::size_t, std::size_t>> boundary_positions;
};

// Zigzag domain analysis of a chain. Ions are ordered by z; the transverse
// coordinate is the projection on the dominant transverse axis. Ions whose
// displacement is below `noise_floor` do not carry a parity. Throws
// PhysicsError when no ion exceeds the floor.
DefectReport detect_defects(std::span<const Vec3> chain, double noise_floor);

struct SeparationReport {
  std::vector<double> mean_radius;     // m, per species index
  std::vector<double> lower_quartile;  // m
  std::vector<double> upper_quartile;  // m
  std::vector<std::size_t> count;
  bool separated = false;
};

// Cylindrical-radius statistics per species. `separated` requires at least
// two populated species whose radius ordering follows m/q with disjoint
// interquartile ranges between neighbours.
SeparationReport species_separation(const SystemState& state, const SpeciesTable& species);

// S(k) = |sum_j exp(i k . r_j)|^2 / N.
std::vector<double> structure_factor_serial(std::span<const Vec3> positions, std::span<const Vec3> k_grid);
std::vector<double> structure_factor_parallel(std::span<const Vec3> positions, std::span<const Vec3> k_grid);
std::vector<double> structure_factor(std::span<const Vec3> positions, std::span<const Vec3> k_grid);

// Azimuthal average of S over wavevectors of magnitude |k| perpendicular to
// `axis` (ring profile of a diffraction pattern viewed along the axis).
std::vector<double> ring_profile(std::span<const Vec3> positions, std::span<const double> k_magnitudes,
                                 const Vec3& axis, int azimuth_samples = 180);

// Median nearest-neighbour distance.
double median_neighbor_distance(std::span<const Vec3> positions);

}  // namespace icc
