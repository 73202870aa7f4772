#pragma once

#include <string>
#include <variant>
#include <vector>

#include "icc/species.hpp"
#include "icc/vec3.hpp"

namespace icc {

// Four-rod linear Paul trap. The RF potential is V cos(Omega t)(x^2 - y^2)/r0^2,
// which makes the Mathieu parameter q = 4 e V / (m Omega^2 r0^2).
struct LinearRfTrap {
  double r0 = 0.0;                       // m
  double rf_amplitude = 0.0;             // V
  double rf_angular_frequency = 0.0;     // rad/s
  double axial_angular_frequency = 0.0;  // rad/s, for the axial reference species
  double radial_asymmetry = 0.0;         // wx^2 = w^2 (1 + a), wy^2 = w^2 (1 - a)
  // The static axial well is shared by all species: k_z = (q/q_ref) m_ref wz^2.
  // Zero means "the species being evaluated is its own reference".
  double axial_reference_mass = 0.0;    // kg
  double axial_reference_charge = 0.0;  // C
  Vec3 stray_field{};                   // V/m, uniform static field

  friend bool operator==(const LinearRfTrap&, const LinearRfTrap&) = default;
};

// Hyperbolic Penning trap with axial field B along +z. Positive ions (and
// crystals locked by a rotating wall) rotate clockwise seen from +z, i.e.
// with angular velocity -rotation_angular_frequency * z_hat.
struct PenningTrap {
  double u0 = 0.0;                          // V
  double z0 = 0.0;                          // m
  double r0 = 0.0;                          // m
  double magnetic_field = 0.0;              // T
  double rotation_angular_frequency = 0.0;  // rad/s
  double wall_strength = 0.0;               // V/m^2, rotating quadrupole gradient

  friend bool operator==(const PenningTrap&, const PenningTrap&) = default;
};

enum class RfMode { pseudopotential, full_drive };

struct TrapConfig {
  std::variant<LinearRfTrap, PenningTrap> geometry;
  RfMode rf_mode = RfMode::pseudopotential;

  bool is_linear() const { return std::holds_alternative<LinearRfTrap>(geometry); }
  bool is_penning() const { return std::holds_alternative<PenningTrap>(geometry); }
  const LinearRfTrap& linear() const { return std::get<LinearRfTrap>(geometry); }
  const PenningTrap& penning() const { return std::get<PenningTrap>(geometry); }
  LinearRfTrap& linear() { return std::get<LinearRfTrap>(geometry); }
  PenningTrap& penning() { return std::get<PenningTrap>(geometry); }

  friend bool operator==(const TrapConfig&, const TrapConfig&) = default;
};

inline constexpr double kMathieuHardLimit = 0.9;
inline constexpr double kMathieuWarnLimit = 0.3;

double mathieu_q(const LinearRfTrap& trap, const IonSpecies& species);

struct SecularFrequencies {
  double x = 0.0;  // rad/s
  double y = 0.0;  // rad/s
};

// Lowest-order secular frequencies w = q Omega / (2 sqrt 2), split by the
// radial asymmetry. Throws PhysicsError when q >= 0.9.
SecularFrequencies rf_secular_frequencies(const LinearRfTrap& trap, const IonSpecies& species);

// Axial frequency of `species` in the shared static well.
double axial_frequency(const LinearRfTrap& trap, const IonSpecies& species);

// RF amplitude that gives `species` the (mean) radial secular frequency `radial`.
double rf_amplitude_for(const LinearRfTrap& trap, const IonSpecies& species, double radial);

// Convenience constructor from secular frequencies; the axial reference is
// set to `species`.
LinearRfTrap linear_trap_from_frequencies(const IonSpecies& species, double radial, double axial,
                                          double rf_angular_frequency, double r0, double radial_asymmetry = 0.0);

struct PenningFrequencies {
  double axial = 0.0;               // wz
  double cyclotron = 0.0;           // wc = qB/m
  double modified_cyclotron = 0.0;  // wc' = wc/2 + sqrt(wc^2/4 - wz^2/2)
  double magnetron = 0.0;           // wm = wc/2 - sqrt(wc^2/4 - wz^2/2)
};

PenningFrequencies penning_frequencies(const PenningTrap& trap, const IonSpecies& species);

// U0 that produces axial frequency `axial` for `species`.
double penning_u0_for(const PenningTrap& trap, const IonSpecies& species, double axial);

// beta^2 = wr (wc - wr) - wz^2/2, the isotropic radial stiffness per unit mass
// in the frame co-rotating at wr. Throws unless wm <= wr <= wc'.
double penning_rotating_frame_radial_stiffness(const PenningTrap& trap, const IonSpecies& species);

// Rate of the velocity-dependent force m * rate * (v x z_hat) that remains in
// the rotating frame once magnetic and Coriolis terms are combined:
// rate = wc - 2 wr. The frame's Larmor angular rate is half of this.
double rotating_frame_gyro_rate(const PenningTrap& trap, const IonSpecies& species);

// Per-species spring constants of the time-independent confinement (N/m):
// the pseudopotential for a linear trap, the rotating-frame well for a
// Penning trap. Throws PhysicsError for a full-drive configuration.
struct Stiffness {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};
Stiffness static_stiffness(const TrapConfig& trap, const IonSpecies& species);

// Static confinement of one species: energy = sum_a k_a r_a^2 / 2 - f . r.
// `uniform_force` carries the stray-field push q E of a linear trap.
struct StaticWell {
  Stiffness stiffness;
  Vec3 uniform_force{};

  Vec3 force(const Vec3& r) const {
    return {uniform_force.x - stiffness.x * r.x, uniform_force.y - stiffness.y * r.y,
            uniform_force.z - stiffness.z * r.z};
  }
  double energy(const Vec3& r) const {
    return 0.5 * (stiffness.x * r.x * r.x + stiffness.y * r.y * r.y + stiffness.z * r.z * r.z) -
           dot(uniform_force, r);
  }
};
StaticWell static_well(const TrapConfig& trap, const IonSpecies& species);

// Checks the stability guards against every species and returns advisory
// warnings (q above 0.3 in pseudopotential mode). Throws PhysicsError or
// ConfigError on hard violations.
std::vector<std::string> validate_trap(const TrapConfig& trap, const SpeciesTable& species);

// Position-dependent trap force. Pseudopotential: -k r (+ stray field).
// Full drive: instantaneous RF quadrupole plus static axial well. Penning:
// lab-frame electrostatic saddle force only.
Vec3 trap_force(const TrapConfig& trap, const IonSpecies& species, const Vec3& position, double time);

// As above plus the magnetic Lorentz force q v x B for a Penning trap.
Vec3 trap_force(const TrapConfig& trap, const IonSpecies& species, const Vec3& position, const Vec3& velocity,
                double time);

// Static-confinement potential energy (pseudopotential or rotating frame).
double trap_potential_energy(const TrapConfig& trap, const IonSpecies& species, const Vec3& position);

// Lab-frame force of a quadrupole wall phi = (S/2)(u^2 - v^2) whose u axis is
// along x at t = 0 and turns with the crystal (angle -wr t about z).
Vec3 rotating_wall_force(const PenningTrap& trap, const IonSpecies& species, double strength,
                         const Vec3& position, double time);

// Rotation between the co-rotating frame and the lab frame at time t.
Vec3 rotating_to_lab(const PenningTrap& trap, const Vec3& rotating, double time);
Vec3 lab_to_rotating(const PenningTrap& trap, const Vec3& lab, double time);

}  // namespace icc
