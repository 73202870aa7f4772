#include "icc/trap.hpp"

#include <cmath>
#include <sstream>

#include "icc/constants.hpp"
#include "icc/error.hpp"

namespace icc {
namespace {

double penning_geometry_factor(const PenningTrap& t) { return 2.0 * t.z0 * t.z0 + t.r0 * t.r0; }

// m * wz^2 of `species` in the linear trap's static well.
double axial_spring(const LinearRfTrap& trap, const IonSpecies& species) {
  const double ref_mass = trap.axial_reference_mass > 0.0 ? trap.axial_reference_mass : species.mass;
  const double ref_charge = trap.axial_reference_charge > 0.0 ? trap.axial_reference_charge : species.charge;
  return (species.charge / ref_charge) * ref_mass * trap.axial_angular_frequency * trap.axial_angular_frequency;
}

double mean_radial_sq(const LinearRfTrap& trap, const IonSpecies& species) {
  const double q = mathieu_q(trap, species);
  const double w = q * trap.rf_angular_frequency / (2.0 * std::sqrt(2.0));
  return w * w;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

double mathieu_q(const LinearRfTrap& trap, const IonSpecies& species) {
  const double w = trap.rf_angular_frequency;
  return 4.0 * species.charge * trap.rf_amplitude / (species.mass * w * w * trap.r0 * trap.r0);
}

SecularFrequencies rf_secular_frequencies(const LinearRfTrap& trap, const IonSpecies& species) {
  const double q = mathieu_q(trap, species);
  if (q >= kMathieuHardLimit) {
    throw PhysicsError("Mathieu q = " + fmt(q) + " for " + species.name + " violates q < 0.9 (q = 4eV/(m Omega^2 r0^2))");
  }
  const double w2 = mean_radial_sq(trap, species);
  return {std::sqrt(w2 * (1.0 + trap.radial_asymmetry)), std::sqrt(w2 * (1.0 - trap.radial_asymmetry))};
}

double axial_frequency(const LinearRfTrap& trap, const IonSpecies& species) {
  return std::sqrt(axial_spring(trap, species) / species.mass);
}

double rf_amplitude_for(const LinearRfTrap& trap, const IonSpecies& species, double radial) {
  // radial = q Omega / (2 sqrt 2)  =>  q = 2 sqrt 2 radial / Omega
  const double w = trap.rf_angular_frequency;
  const double q = 2.0 * std::sqrt(2.0) * radial / w;
  return q * species.mass * w * w * trap.r0 * trap.r0 / (4.0 * species.charge);
}

LinearRfTrap linear_trap_from_frequencies(const IonSpecies& species, double radial, double axial,
                                          double rf_angular_frequency, double r0, double radial_asymmetry) {
  LinearRfTrap t;
  t.r0 = r0;
  t.rf_angular_frequency = rf_angular_frequency;
  t.axial_angular_frequency = axial;
  t.radial_asymmetry = radial_asymmetry;
  t.axial_reference_mass = species.mass;
  t.axial_reference_charge = species.charge;
  t.rf_amplitude = rf_amplitude_for(t, species, radial);
  return t;
}

PenningFrequencies penning_frequencies(const PenningTrap& trap, const IonSpecies& species) {
  PenningFrequencies f;
  f.cyclotron = species.charge * trap.magnetic_field / species.mass;
  const double wz2 = 4.0 * species.charge * trap.u0 / (species.mass * penning_geometry_factor(trap));
  if (wz2 < 0.0) throw PhysicsError("Penning trap: U0 must be non-negative for axial confinement");
  f.axial = std::sqrt(wz2);
  const double disc = f.cyclotron * f.cyclotron / 4.0 - wz2 / 2.0;
  if (disc < 0.0) {
    throw PhysicsError("Penning trap unstable for " + species.name + ": wz^2 = " + fmt(wz2) +
                       " exceeds wc^2/2 = " + fmt(f.cyclotron * f.cyclotron / 2.0));
  }
  const double root = std::sqrt(disc);
  f.modified_cyclotron = f.cyclotron / 2.0 + root;
  // wm = (wz^2/2) / wc' avoids cancellation when wz << wc.
  f.magnetron = f.modified_cyclotron > 0.0 ? (wz2 / 2.0) / f.modified_cyclotron : 0.0;
  return f;
}

double penning_u0_for(const PenningTrap& trap, const IonSpecies& species, double axial) {
  return axial * axial * species.mass * penning_geometry_factor(trap) / (4.0 * species.charge);
}

double penning_rotating_frame_radial_stiffness(const PenningTrap& trap, const IonSpecies& species) {
  const auto f = penning_frequencies(trap, species);
  const double wr = trap.rotation_angular_frequency;
  const double slack = 1e-12 * f.cyclotron;
  if (wr < f.magnetron - slack || wr > f.modified_cyclotron + slack) {
    throw PhysicsError("rotation frequency " + fmt(to_hertz(wr)) + " Hz outside [wm, wc'] = [" +
                       fmt(to_hertz(f.magnetron)) + ", " + fmt(to_hertz(f.modified_cyclotron)) + "] Hz for " +
                       species.name);
  }
  const double beta2 = wr * (f.cyclotron - wr) - f.axial * f.axial / 2.0;
  return beta2 < 0.0 ? 0.0 : beta2;
}

double rotating_frame_gyro_rate(const PenningTrap& trap, const IonSpecies& species) {
  return species.charge * trap.magnetic_field / species.mass - 2.0 * trap.rotation_angular_frequency;
}

Stiffness static_stiffness(const TrapConfig& trap, const IonSpecies& species) {
  return static_well(trap, species).stiffness;
}

StaticWell static_well(const TrapConfig& trap, const IonSpecies& species) {
  StaticWell well;
  if (trap.is_linear()) {
    if (trap.rf_mode == RfMode::full_drive) {
      throw PhysicsError("full RF drive has no static potential; use the dynamics module");
    }
    const auto& t = trap.linear();
    const auto w = rf_secular_frequencies(t, species);
    well.stiffness = {species.mass * w.x * w.x, species.mass * w.y * w.y, axial_spring(t, species)};
    well.uniform_force = t.stray_field * species.charge;
  } else {
    const auto& t = trap.penning();
    const double beta2 = penning_rotating_frame_radial_stiffness(t, species);
    const auto f = penning_frequencies(t, species);
    well.stiffness = {species.mass * beta2, species.mass * beta2, species.mass * f.axial * f.axial};
    // The co-rotating wall is a static quadrupole (S/2)(x^2 - y^2) here.
    well.stiffness.x += species.charge * t.wall_strength;
    well.stiffness.y -= species.charge * t.wall_strength;
  }
  return well;
}

std::vector<std::string> validate_trap(const TrapConfig& trap, const SpeciesTable& species) {
  std::vector<std::string> warnings;
  if (trap.is_linear()) {
    const auto& t = trap.linear();
    if (!(t.r0 > 0.0) || !(t.rf_amplitude > 0.0) || !(t.rf_angular_frequency > 0.0) ||
        !(t.axial_angular_frequency > 0.0)) {
      throw ConfigError("linear trap: r0, rf_amplitude, rf_frequency and axial_frequency must all be > 0");
    }
    if (!(std::abs(t.radial_asymmetry) < 1.0)) throw ConfigError("linear trap: |radial_asymmetry| must be < 1");
    for (const auto& s : species) {
      const double q = mathieu_q(t, s);
      if (q >= kMathieuHardLimit) {
        throw PhysicsError("Mathieu q = " + fmt(q) + " for " + s.name +
                           " violates the stability guard q < 0.9 (q = 4eV/(m Omega^2 r0^2))");
      }
      if (trap.rf_mode == RfMode::pseudopotential && q > kMathieuWarnLimit) {
        warnings.push_back("Mathieu q = " + fmt(q) + " for " + s.name +
                           " exceeds 0.3; lowest-order secular frequencies lose accuracy");
      }
    }
  } else {
    const auto& t = trap.penning();
    if (trap.rf_mode == RfMode::full_drive) throw ConfigError("full_drive is not available for a Penning trap");
    if (!(t.z0 > 0.0) || !(t.r0 >= 0.0) || !(t.magnetic_field > 0.0) || !(t.u0 >= 0.0)) {
      throw ConfigError("penning trap: z0, magnetic_field must be > 0 and U0, r0 >= 0");
    }
    if (t.wall_strength < 0.0) throw ConfigError("penning trap: wall_strength must be >= 0");
    for (const auto& s : species) {
      const double beta2 = penning_rotating_frame_radial_stiffness(t, s);
      if (s.charge * t.wall_strength >= s.mass * beta2) {
        throw PhysicsError("rotating wall strength exceeds the radial confinement of " + s.name);
      }
    }
  }
  return warnings;
}

Vec3 trap_force(const TrapConfig& trap, const IonSpecies& species, const Vec3& r, double time) {
  if (trap.is_linear()) {
    const auto& t = trap.linear();
    if (trap.rf_mode == RfMode::pseudopotential) return static_well(trap, species).force(r);
    const double rf = 2.0 * species.charge * t.rf_amplitude * std::cos(t.rf_angular_frequency * time) / (t.r0 * t.r0);
    const double asym = species.mass * mean_radial_sq(t, species) * t.radial_asymmetry;
    const double kz = axial_spring(t, species);
    return Vec3{-(rf + asym) * r.x, (rf + asym) * r.y, -kz * r.z} + t.stray_field * species.charge;
  }
  const auto& t = trap.penning();
  const double c = 2.0 * species.charge * t.u0 / penning_geometry_factor(t);
  return {c * r.x, c * r.y, -2.0 * c * r.z};
}

Vec3 trap_force(const TrapConfig& trap, const IonSpecies& species, const Vec3& position, const Vec3& velocity,
                double time) {
  Vec3 f = trap_force(trap, species, position, time);
  if (trap.is_penning()) {
    f += cross(velocity, Vec3{0.0, 0.0, trap.penning().magnetic_field}) * species.charge;
  }
  return f;
}

double trap_potential_energy(const TrapConfig& trap, const IonSpecies& species, const Vec3& position) {
  return static_well(trap, species).energy(position);
}

Vec3 rotating_to_lab(const PenningTrap& trap, const Vec3& r, double time) {
  const double th = trap.rotation_angular_frequency * time;
  const double c = std::cos(th);
  const double s = std::sin(th);
  return {c * r.x + s * r.y, -s * r.x + c * r.y, r.z};
}

Vec3 lab_to_rotating(const PenningTrap& trap, const Vec3& r, double time) {
  const double th = trap.rotation_angular_frequency * time;
  const double c = std::cos(th);
  const double s = std::sin(th);
  return {c * r.x - s * r.y, s * r.x + c * r.y, r.z};
}

Vec3 rotating_wall_force(const PenningTrap& trap, const IonSpecies& species, double strength, const Vec3& position,
                         double time) {
  if (strength == 0.0) return {};
  const Vec3 local = lab_to_rotating(trap, position, time);
  const Vec3 f_local{-species.charge * strength * local.x, species.charge * strength * local.y, 0.0};
  return rotating_to_lab(trap, f_local, time);
}

}  // namespace icc
