#include "icc/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <string>

#include "icc/constants.hpp"
#include "icc/equilibrium.hpp"
#include "icc/error.hpp"
#include "icc/interactions.hpp"

namespace icc {
namespace {

constexpr double kStepsPerPeriod = 50.0;

// Exact solution of v' = rate (v x z_hat) over dt.
inline void rotate_xy(Vec3& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double vx = v.x;
  v.x = c * vx + s * v.y;
  v.y = -s * vx + c * v.y;
}

double gyro_rate(const TrapConfig& trap, const IonSpecies& species) {
  return trap.is_penning() ? rotating_frame_gyro_rate(trap.penning(), species) : 0.0;
}

// Per-axis |stiffness| bound of the trap part, N/m.
Vec3 trap_stiffness_bound(const TrapConfig& trap, const IonSpecies& sp) {
  if (trap.is_linear() && trap.rf_mode == RfMode::full_drive) {
    const auto& t = trap.linear();
    const double rf = std::abs(2.0 * sp.charge * t.rf_amplitude / (t.r0 * t.r0));
    const auto w = rf_secular_frequencies(t, sp);
    const double asym = std::abs(sp.mass * 0.5 * (w.x * w.x + w.y * w.y) * t.radial_asymmetry);
    return {rf + asym, rf + asym, std::abs(axial_frequency(t, sp) * axial_frequency(t, sp) * sp.mass)};
  }
  const auto k = static_stiffness(trap, sp);
  return {std::abs(k.x), std::abs(k.y), std::abs(k.z)};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

const char* to_string(BeamGeometry geometry) {
  switch (geometry) {
    case BeamGeometry::uniform:
      return "uniform";
    case BeamGeometry::axial:
      return "axial";
    case BeamGeometry::radial_offset:
      return "radial_offset";
  }
  return "uniform";
}

double CoolingModel::recoil_kick_rms(double mass) const {
  return std::sqrt(2.0 * friction_rate * PhysicalConstants::boltzmann * target_temperature / mass);
}

double CoolingModel::beam_weight(const Vec3& r) const {
  if (beam != BeamGeometry::radial_offset) return 1.0;
  const double dy = r.y - beam_offset;
  return std::exp(-2.0 * (dy * dy + r.z * r.z) / (beam_waist * beam_waist));
}

void validate_cooling(const CoolingModel& c) {
  if (!(c.friction_rate >= 0.0) || !std::isfinite(c.friction_rate)) throw ConfigError("cooling: friction rate must be >= 0");
  if (!(c.target_temperature > 0.0)) throw ConfigError("cooling: target temperature must be > 0");
  if (!(c.beam_waist > 0.0)) throw ConfigError("cooling: beam waist must be > 0");
  if (!(c.extra_heating_rate >= 0.0)) throw ConfigError("cooling: extra heating rate must be >= 0");
}

double max_timestep(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap) {
  check_state(state, species);
  const std::size_t n = state.size();
  const auto q = charges_of(state, species);
  const auto m = masses_of(state, species);
  std::vector<Vec3> well(species.size());
  double gyro = 0.0;
  for (std::size_t s = 0; s < species.size(); ++s) {
    well[s] = trap_stiffness_bound(trap, species[s]);
    gyro = std::max(gyro, std::abs(gyro_rate(trap, species[s])));
  }
  // Gershgorin: row sums of |H_ij| / sqrt(m_i m_j).
  std::vector<std::array<double, 3>> cross_sum(n);
  std::vector<std::array<std::array<double, 3>, 3>> diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 w = well[state.species_index[i]];
    diag[i] = {};
    for (int a = 0; a < 3; ++a) diag[i][a][a] = w[a];
    cross_sum[i] = {0.0, 0.0, 0.0};
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = state.positions[i] - state.positions[j];
      const double r2 = dot(d, d);
      const double c = kCoulomb * q[i] * q[j] / (r2 * std::sqrt(r2));
      const double scale = 1.0 / std::sqrt(m[i] * m[j]);
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          const double p = c * (3.0 * d[a] * d[b] / r2 - (a == b ? 1.0 : 0.0));
          diag[i][a][b] += p;
          diag[j][a][b] += p;
          cross_sum[i][a] += std::abs(p) * scale;
          cross_sum[j][a] += std::abs(p) * scale;
        }
      }
    }
  }
  double lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      double row = cross_sum[i][a];
      for (int b = 0; b < 3; ++b) row += std::abs(diag[i][a][b]) / m[i];
      lambda = std::max(lambda, row);
    }
  }
  const double w_max = std::sqrt(lambda) + gyro;
  double dt = w_max > 0.0 ? kTwoPi / (kStepsPerPeriod * w_max) : std::numeric_limits<double>::infinity();
  if (trap.is_linear() && trap.rf_mode == RfMode::full_drive) {
    dt = std::min(dt, kTwoPi / (kStepsPerPeriod * trap.linear().rf_angular_frequency));
  }
  return dt;
}

Integrator::Integrator(SpeciesTable species, TrapConfig trap, CoolingModel cooling)
    : species_(std::move(species)), fixed_trap_(std::move(trap)), cooling_(cooling) {
  validate_cooling(cooling_);
  validate_trap(*fixed_trap_, species_);
}

Integrator::Integrator(SpeciesTable species, TrapProgram program, CoolingModel cooling)
    : species_(std::move(species)), program_(std::move(program)), cooling_(cooling) {
  validate_cooling(cooling_);
  if (!program_) throw ConfigError("integrator: empty trap program");
}

TrapConfig Integrator::trap_at(double time) const { return fixed_trap_ ? *fixed_trap_ : program_(time); }

void Integrator::forces(const SystemState& s, double time, std::vector<Vec3>& out) {
  const std::size_t n = s.size();
  out.assign(n, Vec3{});
  if (charges_.size() != n) {
    charges_ = charges_of(s, species_);
    masses_ = masses_of(s, species_);
  }
  try {
    coulomb_forces(s.positions, charges_, out);
  } catch (const PhysicsError& e) {
    throw PhysicsError(std::string(e.what()) + " at t = " + fmt(time) +
                       " s; reduce dt or start from an annealed configuration");
  }
  const TrapConfig trap = trap_at(time);
  if (trap.is_linear() && trap.rf_mode == RfMode::full_drive) {
    for (std::size_t i = 0; i < n; ++i) out[i] += trap_force(trap, species_[s.species_index[i]], s.positions[i], time);
    return;
  }
  std::vector<StaticWell> wells(species_.size());
  for (std::size_t k = 0; k < species_.size(); ++k) wells[k] = static_well(trap, species_[k]);
  for (std::size_t i = 0; i < n; ++i) out[i] += wells[s.species_index[i]].force(s.positions[i]);
}

void Integrator::step(SystemState& s, double dt, Rng& rng) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("step: dt must be positive");
  const TrapConfig trap0 = trap_at(s.time);
  if (trap0.is_linear() && trap0.rf_mode == RfMode::full_drive) {
    const double limit = kTwoPi / (kStepsPerPeriod * trap0.linear().rf_angular_frequency);
    if (dt > limit * (1.0 + 1e-12)) {
      throw ConfigError("step: full drive requires dt <= 2 pi / (50 Omega) = " + fmt(limit) + " s");
    }
  }
  const std::size_t n = s.size();
  if (s.velocities.size() != n) throw ConfigError("step: velocity array size mismatch");
  if (charges_.size() != n) {
    charges_ = charges_of(s, species_);
    masses_ = masses_of(s, species_);
    cache_valid_ = false;
  }
  if (!cache_valid_ || cached_time_ != s.time || cached_positions_ != s.positions) forces(s, s.time, force_);

  const double h = 0.5 * dt;
  for (std::size_t i = 0; i < n; ++i) {
    s.velocities[i] += force_[i] * (h / masses_[i]);
    s.positions[i] += s.velocities[i] * h;
  }

  // Thermostat substep: exact gyro rotation, then exact OU update.
  const bool penning = trap0.is_penning();
  const double kb = PhysicalConstants::boltzmann;
  for (std::size_t i = 0; i < n; ++i) {
    const IonSpecies& sp = species_[s.species_index[i]];
    Vec3& v = s.velocities[i];
    if (penning) rotate_xy(v, rotating_frame_gyro_rate(trap0.penning(), sp) * dt);
    if (sp.cooled && cooling_.friction_rate > 0.0) {
      const Vec3 lab = penning ? rotating_to_lab(trap0.penning(), s.positions[i], s.time + h) : s.positions[i];
      const double gamma = cooling_.friction_rate * cooling_.beam_weight(lab);
      const double c = std::exp(-gamma * dt);
      const double sigma = std::sqrt((1.0 - c * c) * kb * cooling_.target_temperature / masses_[i]);
      if (cooling_.beam == BeamGeometry::axial) {
        v.z = c * v.z + sigma * rng.gaussian();
      } else {
        v.x = c * v.x + sigma * rng.gaussian();
        v.y = c * v.y + sigma * rng.gaussian();
        v.z = c * v.z + sigma * rng.gaussian();
      }
    }
    if (cooling_.extra_heating_rate > 0.0) {
      const double sigma = std::sqrt(kb * cooling_.extra_heating_rate * dt / masses_[i]);
      v.x += sigma * rng.gaussian();
      v.y += sigma * rng.gaussian();
      v.z += sigma * rng.gaussian();
    }
  }

  for (std::size_t i = 0; i < n; ++i) s.positions[i] += s.velocities[i] * h;
  s.time += dt;
  forces(s, s.time, force_);
  for (std::size_t i = 0; i < n; ++i) s.velocities[i] += force_[i] * (h / masses_[i]);
  cached_positions_ = s.positions;
  cached_time_ = s.time;
  cache_valid_ = true;
}

void step(SystemState& state, const SpeciesTable& species, const TrapConfig& trap, const CoolingModel& cooling,
          double dt, Rng& rng) {
  const double limit = max_timestep(state, species, trap);
  if (dt > limit * (1.0 + 1e-12)) throw ConfigError("step: dt = " + fmt(dt) + " s exceeds dt_max = " + fmt(limit) + " s");
  Integrator integrator(species, trap, cooling);
  integrator.step(state, dt, rng);
}

double kinetic_temperature(const SystemState& state, const std::vector<Vec3>& velocities,
                           const SpeciesTable& species, const std::vector<std::size_t>& filter) {
  if (velocities.size() != state.size()) throw ConfigError("kinetic_temperature: velocity array size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const std::size_t s = state.species_index[i];
    if (s >= species.size()) throw ConfigError("kinetic_temperature: species index out of range");
    if (!filter.empty() && std::find(filter.begin(), filter.end(), s) == filter.end()) continue;
    sum += species[s].mass * dot(velocities[i], velocities[i]);
    ++count;
  }
  if (count == 0) throw ConfigError("kinetic_temperature: no ions selected");
  return sum / (3.0 * static_cast<double>(count) * PhysicalConstants::boltzmann);
}

double kinetic_temperature(const SystemState& state, const SpeciesTable& species,
                           const std::vector<std::size_t>& filter) {
  return kinetic_temperature(state, state.velocities, species, filter);
}

void thermalize_velocities(SystemState& state, const SpeciesTable& species, double temperature, Rng& rng) {
  if (!(temperature >= 0.0)) throw ConfigError("thermalize_velocities: temperature must be >= 0");
  check_state(state, species);
  state.velocities.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double sigma = std::sqrt(PhysicalConstants::boltzmann * temperature / species[state.species_index[i]].mass);
    state.velocities[i] = {sigma * rng.gaussian(), sigma * rng.gaussian(), sigma * rng.gaussian()};
  }
}

void VelocityAverager::push(const std::vector<Vec3>& v) {
  if (window_ == 0) throw ConfigError("VelocityAverager: window must be positive");
  if (ring_.empty()) {
    ring_.assign(window_, std::vector<Vec3>(v.size()));
    sum_.assign(v.size(), Vec3{});
  }
  if (v.size() != sum_.size()) throw ConfigError("VelocityAverager: ion count changed");
  auto& slot = ring_[head_];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (count_ >= window_) sum_[i] -= slot[i];
    sum_[i] += v[i];
    slot[i] = v[i];
  }
  head_ = (head_ + 1) % window_;
  ++count_;
}

std::vector<Vec3> VelocityAverager::mean() const {
  const double k = static_cast<double>(std::min(count_, window_));
  std::vector<Vec3> out(sum_.size());
  if (k == 0.0) return out;
  for (std::size_t i = 0; i < sum_.size(); ++i) out[i] = sum_[i] * (1.0 / k);
  return out;
}

Observation observe(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap) {
  Observation o;
  o.time = state.time;
  double ke = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    ke += 0.5 * species[state.species_index[i]].mass * dot(state.velocities[i], state.velocities[i]);
  }
  o.kinetic_energy = ke;
  o.temperature = state.size() ? kinetic_temperature(state, species) : 0.0;
  const auto q = charges_of(state, species);
  o.coulomb_energy = coulomb_energy(state.positions, q);
  if (trap.is_linear() && trap.rf_mode == RfMode::full_drive) {
    o.trap_energy = std::numeric_limits<double>::quiet_NaN();
    o.total_energy = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto e = total_potential_energy(state, species, trap);
    o.trap_energy = e.trap_energy;
    o.total_energy = e.total + ke;
  }
  return o;
}

void evolve(SystemState& state, Integrator& integrator, const EvolveOptions& opt, Rng& rng, const Observer& observer) {
  if (!(opt.duration >= 0.0)) throw ConfigError("evolve: duration must be >= 0");
  const SpeciesTable& species = integrator.species();
  check_state(state, species);
  if (state.velocities.size() != state.size()) state.velocities.assign(state.size(), Vec3{});
  const TrapConfig trap0 = integrator.trap_at(state.time);
  const bool full_drive = trap0.is_linear() && trap0.rf_mode == RfMode::full_drive;

  const double limit = max_timestep(state, species, trap0);
  double dt = opt.dt > 0.0 ? opt.dt : 0.25 * limit;
  if (dt > limit * (1.0 + 1e-12)) {
    throw ConfigError("evolve: dt = " + fmt(dt) + " s exceeds dt_max = " + fmt(limit) + " s");
  }
  const auto steps = opt.duration > 0.0 ? static_cast<std::size_t>(std::ceil(opt.duration / dt - 1e-9)) : 0;
  if (steps > 0) dt = opt.duration / static_cast<double>(steps);

  std::optional<VelocityAverager> averager;
  if (full_drive) {
    const double period = kTwoPi / trap0.linear().rf_angular_frequency;
    averager.emplace(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(period / dt))));
  }
  auto emit = [&]() {
    if (!observer) return;
    const TrapConfig trap = integrator.trap_at(state.time);
    Observation o = observe(state, species, trap);
    if (averager && averager->full()) o.temperature = kinetic_temperature(state, averager->mean(), species);
    observer(o, state);
  };

  if (opt.sample_every > 0) emit();
  for (std::size_t k = 1; k <= steps; ++k) {
    integrator.step(state, dt, rng);
    if (averager) averager->push(state.velocities);
    if (opt.sample_every > 0 && k % opt.sample_every == 0) emit();
  }
}

void evolve(SystemState& state, const SpeciesTable& species, const TrapConfig& trap, const CoolingModel& cooling,
            const EvolveOptions& options, Rng& rng, const Observer& observer) {
  Integrator integrator(species, trap, cooling);
  evolve(state, integrator, options, rng, observer);
}

double QuenchSchedule::value_at(double t) const {
  if (t <= 0.0) return start_value;
  if (t >= duration) return end_value;
  double u = t / duration;
  if (shape == QuenchShape::smoothstep) u = u * u * (3.0 - 2.0 * u);
  return start_value + (end_value - start_value) * u;
}

TrapConfig quench_trap(const TrapConfig& base, const IonSpecies& ref, const QuenchSchedule& sched, double time) {
  if (!base.is_linear()) throw ConfigError("quench: only linear RF traps are supported");
  TrapConfig trap = base;
  auto& t = trap.linear();
  const double value = sched.value_at(time);
  if (sched.control == QuenchControl::axial_frequency) {
    // Rescale the axial spring of the reference species.
    t.axial_reference_mass = ref.mass;
    t.axial_reference_charge = ref.charge;
    t.axial_angular_frequency = value;
  } else {
    t.rf_amplitude = rf_amplitude_for(t, ref, value);
  }
  return trap;
}

double soft_anisotropy(const LinearRfTrap& trap, const IonSpecies& species) {
  const auto w = rf_secular_frequencies(trap, species);
  const double wz = axial_frequency(trap, species);
  const double soft = std::min(w.x, w.y);
  return soft * soft / (wz * wz);
}

namespace {

double cached_critical_anisotropy(int n) {
  static std::mutex mu;
  static std::map<int, double> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  const double v = zigzag_critical_anisotropy(n);
  std::lock_guard lock(mu);
  cache[n] = v;
  return v;
}

}  // namespace

QuenchResult run_quench(const SystemState& initial, const SpeciesTable& species, const TrapConfig& base,
                        const QuenchSchedule& sched, const CoolingModel& cooling, Rng& rng,
                        const QuenchOptions& opt) {
  check_state(initial, species);
  validate_cooling(cooling);
  if (!base.is_linear() || base.rf_mode != RfMode::pseudopotential) {
    throw ConfigError("quench: needs a linear trap in pseudopotential mode");
  }
  if (!(sched.duration > 0.0)) throw ConfigError("quench: duration must be positive");
  if (!(cooling.friction_rate > 0.0)) throw ConfigError("quench: the stabilization hold needs a friction rate > 0");
  const int n = static_cast<int>(initial.size());
  if (n < 3 || n > 50) throw ConfigError("quench: chain length must be within 3..50");
  for (auto s : initial.species_index) {
    if (s != 0) throw ConfigError("quench: all ions must be of the reference species");
  }
  const IonSpecies& ref = species[0];
  const TrapConfig start = quench_trap(base, ref, sched, 0.0);
  const TrapConfig end = quench_trap(base, ref, sched, sched.duration);
  validate_trap(start, species);
  validate_trap(end, species);
  const double critical = cached_critical_anisotropy(n);
  const double a0 = soft_anisotropy(start.linear(), ref);
  const double a1 = soft_anisotropy(end.linear(), ref);
  if (!(a0 > critical && a1 < critical)) {
    throw ConfigError("quench: schedule must cross the zigzag point from the linear side (anisotropy " + fmt(a0) +
                      " -> " + fmt(a1) + ", critical " + fmt(critical) + ")");
  }

  QuenchResult result;
  result.dt = opt.dt > 0.0 ? opt.dt
                           : 0.25 * std::min(max_timestep(initial, species, start), max_timestep(initial, species, end));
  const double hold = opt.hold_factor / cooling.friction_rate;
  const double total = sched.duration + hold;
  result.steps = static_cast<std::size_t>(std::ceil(total / result.dt - 1e-9));
  const double dt = total / static_cast<double>(result.steps);

  Integrator integrator(species, [base, ref, sched](double t) { return quench_trap(base, ref, sched, t); }, cooling);
  SystemState s = initial;
  if (s.velocities.size() != s.size()) s.velocities.assign(s.size(), Vec3{});
  s.time = 0.0;
  if (opt.thermal_start) thermalize_velocities(s, species, cooling.target_temperature, rng);
  for (std::size_t k = 0; k < result.steps; ++k) integrator.step(s, dt, rng);
  result.final_state = s;

  const auto w = rf_secular_frequencies(end.linear(), ref);
  const double soft = std::min(w.x, w.y);
  result.noise_floor =
      5.0 * std::sqrt(PhysicalConstants::boltzmann * cooling.target_temperature / (ref.mass * soft * soft));

  if (opt.relax_before_count) {
    MinimizerOptions mo;
    mo.anneal = false;
    mo.restarts = 0;
    const auto eq = relax(s, species, end, mo);
    // relax sorts ions; the defect analysis only needs positions.
    result.counted_positions = eq.positions;
  } else {
    result.counted_positions = s.positions;
  }
  result.defects = detect_defects(result.counted_positions, result.noise_floor);
  return result;
}

PenningLabIntegrator::PenningLabIntegrator(SpeciesTable species, PenningTrap trap)
    : species_(std::move(species)), trap_(trap) {
  for (const auto& sp : species_) penning_frequencies(trap_, sp);
}

void PenningLabIntegrator::electric_forces(const SystemState& s, double time, std::vector<Vec3>& out) const {
  out.assign(s.size(), Vec3{});
  coulomb_forces(s.positions, charges_, out);
  const TrapConfig cfg{trap_, RfMode::pseudopotential};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const IonSpecies& sp = species_[s.species_index[i]];
    out[i] += trap_force(cfg, sp, s.positions[i], time);
    out[i] += rotating_wall_force(trap_, sp, trap_.wall_strength, s.positions[i], time);
  }
}

void PenningLabIntegrator::step(SystemState& s, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step: dt must be positive");
  const std::size_t n = s.size();
  if (charges_.size() != n) charges_ = charges_of(s, species_);
  if (force_.size() != n) electric_forces(s, s.time, force_);
  const double h = 0.5 * dt;
  for (std::size_t i = 0; i < n; ++i) {
    const IonSpecies& sp = species_[s.species_index[i]];
    s.velocities[i] += force_[i] * (h / sp.mass);
    s.positions[i] += s.velocities[i] * h;
    rotate_xy(s.velocities[i], sp.charge * trap_.magnetic_field / sp.mass * dt);
    s.positions[i] += s.velocities[i] * h;
  }
  s.time += dt;
  electric_forces(s, s.time, force_);
  for (std::size_t i = 0; i < n; ++i) {
    s.velocities[i] += force_[i] * (h / species_[s.species_index[i]].mass);
  }
}

SystemState rotating_state_to_lab(const SystemState& rot, const PenningTrap& trap) {
  SystemState lab = rot;
  lab.velocities.resize(rot.size());
  const double wr = trap.rotation_angular_frequency;
  for (std::size_t i = 0; i < rot.size(); ++i) {
    const Vec3& r = rot.positions[i];
    Vec3 v{wr * r.y, -wr * r.x, 0.0};
    if (i < rot.velocities.size()) v += rot.velocities[i];
    lab.positions[i] = rotating_to_lab(trap, r, rot.time);
    lab.velocities[i] = rotating_to_lab(trap, v, rot.time);
  }
  return lab;
}

double rotation_angle(const std::vector<Vec3>& reference, const std::vector<Vec3>& current) {
  if (reference.size() != current.size()) throw ConfigError("rotation_angle: size mismatch");
  double c = 0.0, d = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const Vec3& a = reference[i];
    const Vec3& b = current[i];
    c += a.x * b.y - a.y * b.x;
    d += a.x * b.x + a.y * b.y;
  }
  return std::atan2(c, d);
}

}  // namespace icc
