#pragma once

#include <numbers>

namespace icc {

// CODATA 2018 values, SI units.
struct PhysicalConstants {
  static constexpr double elementary_charge = 1.602176634e-19;      // C (exact)
  static constexpr double vacuum_permittivity = 8.8541878128e-12;   // F/m
  static constexpr double boltzmann = 1.380649e-23;                 // J/K (exact)
  static constexpr double atomic_mass_unit = 1.66053906660e-27;     // kg
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Coulomb constant 1/(4 pi eps0).
inline constexpr double kCoulomb = 1.0 / (4.0 * kPi * PhysicalConstants::vacuum_permittivity);

inline constexpr double to_angular(double hertz) { return kTwoPi * hertz; }
inline constexpr double to_hertz(double angular) { return angular / kTwoPi; }

inline constexpr double amu_to_kg(double u) { return u * PhysicalConstants::atomic_mass_unit; }
inline constexpr double kg_to_amu(double kg) { return kg / PhysicalConstants::atomic_mass_unit; }

}  // namespace icc
