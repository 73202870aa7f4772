// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "icc/config.hpp"
#include "icc/constants.hpp"
#include "icc/diagnostics.hpp"
#include "icc/dynamics.hpp"
#include "icc/equilibrium.hpp"
#include "icc/imaging.hpp"
#include "icc/interactions.hpp"
#include "icc/modes.hpp"
#include "icc/run.hpp"
#include "icc/trap.hpp"
#include "oracles.hpp"

using namespace icc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string strf(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double rel(double a, double b) { return std::abs(a / b - 1.0); }

IonSpecies ca40() { return species_from_catalog("Ca40"); }

TrapConfig linear_trap(const IonSpecies& sp, double radial, double axial, double asym = 0.0) {
  TrapConfig t;
  t.geometry = linear_trap_from_frequencies(sp, radial, axial, to_angular(100e6), 0.5e-3, asym);
  return t;
}

EquilibriumResult relax_chain(int n, const SpeciesTable& sp, const TrapConfig& t, std::uint64_t seed = 1) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  return relax(axial_lattice_start(idx, sp, t, seed), sp, t);
}

// 1 ---------------------------------------------------------------------
Outcome two_ion_spacing_check() {
  const auto ca = ca40();
  const double wz = to_angular(500e3);
  const double closed = two_ion_spacing(ca, wz);
  const double hand = oracle::two_ion_spacing(ca.mass, ca.charge, wz);
  const auto t = linear_trap(ca, to_angular(2e6), wz);
  const auto eq = relax_chain(2, {ca}, t);
  const double dz = eq.positions[1].z - eq.positions[0].z;
  const double quoted_dev = closed / 10e-6 - 1.0;
  Outcome o;
  o.pass = eq.converged && rel(dz, closed) <= 1e-9 && rel(closed, hand) <= 1e-12 && std::abs(quoted_dev) <= 0.2;
  o.detail = strf("closed %.6g um, minimizer rel dev %.2e, hand rel dev %.2e, vs 10 um %+.1f%%", closed * 1e6,
                  rel(dz, closed), rel(closed, hand), 100 * quoted_dev);
  return o;
}

struct ChainModes {
  std::vector<double> axial, transverse;
};

ChainModes chain_modes(int n, const IonSpecies& ca, const TrapConfig& t) {
  const auto eq = relax_chain(n, {ca}, t);
  const auto spec = mode_spectrum(hessian(eq.state(), {ca}, t));
  return {spec.frequencies_with(ModeLabel::axial), spec.frequencies_with(ModeLabel::transverse)};
}

// 2 ---------------------------------------------------------------------
Outcome breathing_mode() {
  const auto ca = ca40();
  const double wz = to_angular(500e3);
  const auto t = linear_trap(ca, to_angular(5e6), wz);
  double worst = 0.0;
  for (int n = 2; n <= 10; ++n) {
    const auto m = chain_modes(n, ca, t);
    worst = std::max(worst, m.axial.size() < 2 ? 1.0 : rel(m.axial[1], std::sqrt(3.0) * wz));
  }
  return {worst <= 1e-6, strf("max rel dev of 2nd axial mode from sqrt(3) wz over N=2..10: %.2e", worst)};
}

// 3 ---------------------------------------------------------------------
Outcome com_modes() {
  const auto ca = ca40();
  const double wz = to_angular(500e3);
  const auto t = linear_trap(ca, to_angular(5e6), wz);
  const double wx = rf_secular_frequencies(t.linear(), ca).x;
  double worst_ax = 0.0, worst_tr = 0.0;
  for (int n = 2; n <= 10; ++n) {
    const auto m = chain_modes(n, ca, t);
    worst_ax = std::max(worst_ax, rel(m.axial.front(), wz));
    worst_tr = std::max(worst_tr, rel(*std::max_element(m.transverse.begin(), m.transverse.end()), wx));
  }
  return {worst_ax <= 1e-9 && worst_tr <= 1e-9,
          strf("lowest axial vs wz %.2e, highest transverse vs wx %.2e", worst_ax, worst_tr)};
}

// 4 ---------------------------------------------------------------------
Outcome spacing_law() {
  const auto ca = ca40();
  const double wz = to_angular(200e3);
  const double l = string_length_scale(ca, wz);
  std::vector<double> lx, ly;
  for (int n = 5; n <= 50; ++n) {
    const auto z = string_positions(n, ca, wz);
    const std::size_t c = static_cast<std::size_t>(n / 2);
    const double gap = z[c] - z[c - 1];
    lx.push_back(std::log(n));
    ly.push_back(std::log(gap / l));
  }
  const auto fit = oracle::fit_line(lx, ly);
  // Full 3D relaxation agrees with the 1D solution.
  const auto t = linear_trap(ca, to_angular(6e6), wz);
  double worst = 0.0;
  for (int n : {5, 20, 50}) {
    const auto z = string_positions(n, ca, wz);
    const auto eq = relax_chain(n, {ca}, t);
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(eq.positions[i].z - z[i]) / l);
  }
  return {std::abs(fit.slope + 0.559) <= 0.03 && worst < 1e-6,
          strf("exponent %.4f (target -0.559 +- 0.03), prefactor %.3f l, 3D vs 1D max dev %.1e l", fit.slope,
               std::exp(fit.intercept), worst)};
}

// 5 ---------------------------------------------------------------------
Outcome zigzag_point() {
  const auto ca = ca40();
  const double wz = to_angular(500e3);
  const double soft_lib = zigzag_critical_anisotropy(3);
  // Soft-mode bisection on the transverse spectrum of the 3-ion string.
  std::vector<Vec3> pos;
  for (double z : string_positions(3, ca, wz)) pos.push_back({0, 0, z});
  const SystemState string = make_state(pos);
  auto lowest_sq = [&](double r) {
    const auto t = linear_trap(ca, std::sqrt(r) * wz, wz);
    return transverse_spectrum(string, {ca}, t.linear(), 1e-22).squared_frequencies.front();
  };
  const double soft = oracle::bisect(lowest_sq, 2.0, 3.0, 1e-12);
  // Structure-label bisection on fully relaxed crystals (soft axis y).
  const double a = 0.01;
  auto label_sign = [&](double r) {
    const auto t = linear_trap(ca, std::sqrt(r / (1 - a)) * wz, wz, a);
    const auto eq = relax_chain(3, {ca}, t, 11);
    return classify_structure(eq.positions) == StructureLabel::zigzag ? -1.0 : 1.0;
  };
  const double label = oracle::bisect(label_sign, 2.0, 3.0, 1e-7);
  const bool ok = std::abs(soft - 2.4) <= 1e-3 && std::abs(label - 2.4) <= 1e-3 &&
                  std::abs(soft - label) <= 1e-3 && std::abs(soft_lib - 2.4) <= 1e-3;
  return {ok, strf("soft-mode %.7f (library %.7f), structure-label %.7f, |diff| %.1e", soft, soft_lib, label,
                   std::abs(soft - label))};
}

// 6 ---------------------------------------------------------------------
Outcome penning_identities() {
  Rng rng(20240611);
  const double eps = std::numeric_limits<double>::epsilon();
  double worst_sum = 0.0, worst_prod = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto sp = make_species("X", amu_to_kg(1.0 + 250.0 * rng.uniform()), 1 + static_cast<int>(3 * rng.uniform()));
    PenningTrap p;
    p.magnetic_field = 0.1 + 10.0 * rng.uniform();
    p.z0 = 1e-4 + 1e-2 * rng.uniform();
    p.r0 = 1e-4 + 1e-2 * rng.uniform();
    const double wc = sp.charge * p.magnetic_field / sp.mass;
    const double wz = wc / std::sqrt(2.0) * (1e-4 + 0.9999 * rng.uniform());
    p.u0 = penning_u0_for(p, sp, wz);
    const auto f = penning_frequencies(p, sp);
    worst_sum = std::max(worst_sum, std::abs(f.modified_cyclotron + f.magnetron - f.cyclotron) / (eps * f.cyclotron));
    const double half = f.axial * f.axial / 2.0;
    worst_prod = std::max(worst_prod, std::abs(f.modified_cyclotron * f.magnetron - half) / (eps * half));
  }
  return {worst_sum <= 4.0 && worst_prod <= 4.0,
          strf("1000 random traps: worst sum error %.1f ulp, worst product error %.1f ulp", worst_sum, worst_prod)};
}

// 7 ---------------------------------------------------------------------
struct PenningSetup {
  IonSpecies be = species_from_catalog("Be9");
  PenningTrap trap;
  double wc = 0.0;
};

PenningSetup density_setup() {
  PenningSetup s;
  s.trap.magnetic_field = 4.5;
  s.trap.z0 = 1e-3;
  s.trap.r0 = 1e-3;
  s.wc = s.be.charge * s.trap.magnetic_field / s.be.mass;
  s.trap.u0 = penning_u0_for(s.trap, s.be, 0.4 * s.wc);
  return s;
}

Outcome rotation_density_check() {
  auto s = density_setup();
  const int n = 200;
  std::vector<double> fr, nd;
  double worst = 0.0;
  std::string rows;
  for (double f : {0.30, 0.40, 0.50, 0.60, 0.70}) {
    s.trap.rotation_angular_frequency = f * s.wc;
    TrapConfig t;
    t.geometry = s.trap;
    const std::vector<std::size_t> idx(n, 0);
    MinimizerOptions mo;
    mo.seed = 5;
    const auto eq = relax(cloud_start(idx, {s.be}, t, 5), {s.be}, t, mo);
    const double measured = interior_voronoi_density(eq.positions);
    // n = 2 eps0 m wr (wc - wr) / e^2 by hand.
    const double wr = f * s.wc;
    const double expect = 2 * oracle::eps0 * s.be.mass * wr * (s.wc - wr) / (oracle::e * oracle::e);
    worst = std::max(worst, rel(measured, expect));
    fr.push_back(f);
    nd.push_back(measured);
    rows += strf(" %.2f:%+.1f%%", f, 100 * (measured / expect - 1));
  }
  // Parabola through the measured densities; vertex = density maximum.
  // Least squares for y = c0 + c1 x + c2 x^2.
  Matrix a(3);
  std::vector<double> b(3, 0.0);
  for (std::size_t i = 0; i < fr.size(); ++i) {
    const double p[3] = {1, fr[i], fr[i] * fr[i]};
    for (int r = 0; r < 3; ++r) {
      b[r] += p[r] * nd[i];
      for (int c = 0; c < 3; ++c) a(r, c) += p[r] * p[c];
    }
  }
  const auto c = solve_linear(a, b);
  const double vertex = -c[1] / (2 * c[2]);
  const bool ok = worst <= 0.10 && c[2] < 0 && std::abs(vertex - 0.5) <= 0.005;
  return {ok, strf("N=200 Be+ at 4.5 T, interior density vs n(wr) [wr/wc:dev]%s; fitted maximum at wr/wc = %.4f",
                   rows.c_str(), vertex)};
}

// 8 ---------------------------------------------------------------------
Outcome thermostat() {
  const auto ca = ca40();
  auto dark = ca;
  dark.name = "Ca40dark";
  dark.cooled = false;
  dark.fluorescent = false;
  const SpeciesTable sp{ca, dark};
  const auto t = linear_trap(ca, to_angular(1e6), to_angular(500e3));
  CoolingModel cool;
  cool.friction_rate = 2e5;
  cool.target_temperature = 1e-3;

  auto mean_temperature = [&](SystemState s, std::vector<std::size_t> filter, double duration, std::uint64_t seed) {
    Integrator integ(sp, t, cool);
    Rng rng = Rng::stream(seed, 8);
    const double burn = 50.0 / cool.friction_rate;
    double sum = 0.0;
    std::size_t count = 0;
    EvolveOptions eo;
    eo.duration = burn + duration;
    eo.sample_every = 10;
    evolve(s, integ, eo, rng, [&](const Observation& ob, const SystemState& st) {
      if (ob.time < burn) return;
      sum += kinetic_temperature(st, sp, filter);
      ++count;
    });
    return sum / static_cast<double>(count);
  };
  const double t_single = mean_temperature(make_state({{0, 0, 0}}), {}, 0.04, 1);
  const auto eq = relax(make_state({{0, 0, -5e-6}, {0, 0, 5e-6}}), sp, t);
  SystemState pair = eq.state();
  pair.species_index = {0, 1};
  const double t_dark = mean_temperature(pair, {1}, 0.04, 2);
  const bool ok = rel(t_single, 1e-3) <= 0.05 && rel(t_dark, 1e-3) <= 0.10;
  return {ok, strf("single cooled ion %.4f mK (+-5%%), sympathetically cooled dark ion %.4f mK (+-10%%)",
                   t_single * 1e3, t_dark * 1e3)};
}

// 9 ---------------------------------------------------------------------
struct Trace {
  std::vector<double> t, x;
};

Trace full_drive_trace(const TrapConfig& t, const IonSpecies& ca, const Vec3& start, double duration, double dt,
                       int every) {
  Integrator integ({ca}, t, {});
  SystemState s = make_state({start});
  Rng rng(1);
  Trace tr;
  const auto steps = static_cast<long>(std::ceil(duration / dt));
  for (long k = 0; k < steps; ++k) {
    if (k % every == 0) {
      tr.t.push_back(s.time);
      tr.x.push_back(s.positions[0].x);
    }
    integ.step(s, dt, rng);
  }
  return tr;
}

Outcome micromotion() {
  const auto ca = ca40();
  const double omega = to_angular(20e6), r0 = 0.5e-3, q = 0.1;
  TrapConfig t;
  LinearRfTrap lt;
  lt.r0 = r0;
  lt.rf_angular_frequency = omega;
  lt.rf_amplitude = q * ca.mass * omega * omega * r0 * r0 / (4 * ca.charge);
  lt.axial_angular_frequency = to_angular(200e3);
  t.geometry = lt;
  t.rf_mode = RfMode::full_drive;
  const double predicted = rf_secular_frequencies(lt, ca).x;
  const double hand = q * omega / (2 * std::sqrt(2.0));  // q Omega / (2 sqrt 2) by hand
  const double dt = kTwoPi / omega / 100.0;
  const double period = kTwoPi / predicted;
  const auto tr = full_drive_trace(t, ca, {5e-6, 0, 0}, 200 * period, dt, 10);
  const auto peak = oracle::spectral_peak(tr.t, tr.x, 0.2 * predicted, 2.0 * predicted);
  const double sec_dev = rel(peak.first, predicted);

  // Micromotion: the two sidebands at Omega -+ w_sec carry amplitude q r / 4 each.
  std::vector<double> rs, amps;
  for (double r : {1e-6, 5e-6, 10e-6, 20e-6, 35e-6, 50e-6}) {
    const auto m = full_drive_trace(t, ca, {r, 0, 0}, 60 * period, dt, 5);
    const double lo = oracle::spectral_peak(m.t, m.x, omega - 1.5 * peak.first, omega - 0.5 * peak.first, 400).second;
    const double hi = oracle::spectral_peak(m.t, m.x, omega + 0.5 * peak.first, omega + 1.5 * peak.first, 400).second;
    rs.push_back(r);
    amps.push_back(lo + hi);
  }
  const auto fit = oracle::fit_line(rs, amps);
  const bool ok = sec_dev <= 0.01 && rel(predicted, hand) < 1e-12 && fit.max_relative_residual < 0.01 &&
                  rel(fit.slope, q / 2) < 0.1;
  return {ok, strf("q=0.1: secular peak %.5g kHz vs q Omega/(2 sqrt 2) %.5g kHz (dev %.3f%%); micromotion slope %.4f "
                   "(q/2 = %.3f), max linear-fit residual %.2e",
                   to_hertz(peak.first) / 1e3, to_hertz(predicted) / 1e3, 100 * sec_dev, fit.slope, q / 2,
                   fit.max_relative_residual)};
}

// 10 --------------------------------------------------------------------
Outcome crystallization() {
  const auto ca = ca40();
  const SpeciesTable sp{ca};
  const auto t = linear_trap(ca, to_angular(1e6), to_angular(400e3));
  const std::vector<std::size_t> idx(50, 0);
  SystemState s = cloud_start(idx, sp, t, 10);
  Rng rng = Rng::stream(10, 1);
  thermalize_velocities(s, sp, 10.0, rng);
  CoolingModel cool;
  cool.friction_rate = 1e5;
  cool.target_temperature = 1e-3;
  std::vector<double> times, gammas;
  EvolveOptions eo;
  eo.duration = 30.0 / cool.friction_rate;
  eo.dt = 2e-9;
  eo.sample_every = 25;
  evolve(s, sp, t, cool, eo, rng, [&](const Observation& ob, const SystemState& st) {
    const double n = cloud_density(st.positions);
    const double a0 = std::cbrt(3.0 / (4.0 * oracle::pi * n));
    times.push_back(ob.time);
    gammas.push_back(oracle::ke * oracle::e * oracle::e / (a0 * oracle::kB * ob.temperature));
  });
  // Centred moving average of log Gamma over one cooling time.
  const double dt_sample = times[1] - times[0];
  const int half = std::max(1, static_cast<int>(0.5 / cool.friction_rate / dt_sample));
  std::vector<double> smooth;
  for (int i = half; i + half < static_cast<int>(gammas.size()); ++i) {
    double acc = 0.0;
    for (int j = i - half; j <= i + half; ++j) acc += std::log(gammas[j]);
    smooth.push_back(std::exp(acc / (2 * half + 1)));
  }
  std::size_t cross = smooth.size();
  for (std::size_t i = 0; i < smooth.size(); ++i) {
    if (smooth[i] >= kCrystallizationGamma) {
      cross = i;
      break;
    }
  }
  bool monotone = cross < smooth.size();
  for (std::size_t i = 1; i <= cross && i < smooth.size(); ++i) monotone = monotone && smooth[i] >= smooth[i - 1];
  bool stays = true;
  for (std::size_t i = cross; i < smooth.size(); ++i) stays = stays && smooth[i] >= kCrystallizationGamma;
  const double final_gamma = smooth.back();
  const auto regime = classify_regime(final_gamma);
  const auto shape = classify_structure(s.positions);
  const bool ok = monotone && stays && regime != PlasmaRegime::gas && smooth.front() < kCrystallizationGamma;
  return {ok, strf("smoothed Gamma %.3g -> %.3g, monotone up to the 178 crossing at t = %.3g s: %s, stays above: %s; "
                   "final regime %s, shape %s",
                   smooth.front(), final_gamma, cross < smooth.size() ? times[cross + half] : -1.0,
                   monotone ? "yes" : "no", stays ? "yes" : "no", to_string(regime), to_string(shape))};
}

// 11 --------------------------------------------------------------------
Outcome kibble_zurek() {
  const int n = 30;
  const auto ca = ca40();
  const double wz = to_angular(50e3);
  const double rc = zigzag_critical_anisotropy(n);
  const double a = 0.01;
  ExperimentConfig c;
  c.protocol = Protocol::quench;
  c.seed = 42;
  c.species = {{ca, static_cast<std::size_t>(n)}};
  auto mean_radial = [&](double ratio) { return std::sqrt(ratio * rc / (1 - a)) * wz; };
  c.trap.geometry = linear_trap_from_frequencies(ca, mean_radial(1.2), wz, to_angular(20e6), 0.5e-3, a);
  c.cooling.friction_rate = 10.0 * wz;
  c.cooling.target_temperature = 1e-3;
  c.quench.control = QuenchControl::radial_frequency;
  c.quench.start_value = mean_radial(1.2);
  c.quench.end_value = mean_radial(0.4);
  c.quench.hold_factor = 20;
  c.quench.seeds = 100;
  const double period = kTwoPi / wz;
  for (double m = 0.25; m <= 8.0; m *= 2) c.quench.durations.push_back(m * period);
  const auto sweep = run_quench_sweep(c);
  bool monotone = true;
  for (std::size_t i = 1; i < sweep.mean_defects.size(); ++i) {
    monotone = monotone && sweep.mean_defects[i] <= sweep.mean_defects[i - 1];
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < sweep.durations.size(); ++i) {
    if (sweep.mean_defects[i] <= 0) continue;
    lx.push_back(std::log(sweep.durations[i]));
    ly.push_back(std::log(sweep.mean_defects[i]));
  }
  const auto fit = oracle::fit_line(lx, ly);
  std::string means;
  for (std::size_t i = 0; i < sweep.durations.size(); ++i) {
    means += strf(" %.3g:%.2f", sweep.durations[i] / period, sweep.mean_defects[i]);
  }
  const bool ok = monotone && lx.size() >= 5 && fit.slope < 0 && fit.r_squared >= 0.8;
  return {ok, strf("N=30, 100 seeds, [tau/T_z:mean defects]%s; exponent %.3f, R^2 %.3f over %zu points", means.c_str(),
                   fit.slope, fit.r_squared, lx.size())};
}

// 12 --------------------------------------------------------------------
Outcome separation() {
  auto mixed = [](const IonSpecies& a, std::size_t na, const IonSpecies& b, std::size_t nb) {
    const SpeciesTable sp{a, b};
    const auto ref = a.mass > b.mass ? a : b;
    const auto t = linear_trap(ref, to_angular(400e3), to_angular(150e3));
    std::vector<std::size_t> idx(na, 0);
    idx.resize(na + nb, 1);
    MinimizerOptions mo;
    mo.anneal = true;
    mo.restarts = 2;
    mo.seed = 12;
    const auto eq = relax(cloud_start(idx, sp, t, 12), sp, t, mo);
    return species_separation(eq.state(), sp);
  };
  const auto mgca = mixed(species_from_catalog("Mg24"), 5, ca40(), 15);
  const auto ba = mixed(species_from_catalog("Ba137"), 10, species_from_catalog("Ba138"), 10);
  const bool inside = mgca.mean_radius[0] < mgca.mean_radius[1] && mgca.upper_quartile[0] < mgca.lower_quartile[1];
  const bool ok = inside && mgca.separated && !ba.separated;
  return {ok, strf("Mg/Ca mean radius %.2f/%.2f um, IQR Mg [%.2f,%.2f] Ca [%.2f,%.2f], flag %d; Ba137/Ba138 mean "
                   "radius %.2f/%.2f um, flag %d",
                   mgca.mean_radius[0] * 1e6, mgca.mean_radius[1] * 1e6, mgca.lower_quartile[0] * 1e6,
                   mgca.upper_quartile[0] * 1e6, mgca.lower_quartile[1] * 1e6, mgca.upper_quartile[1] * 1e6,
                   mgca.separated, ba.mean_radius[0] * 1e6, ba.mean_radius[1] * 1e6, ba.separated)};
}

// 13 --------------------------------------------------------------------
Outcome structure_scan() {
  ExperimentConfig c;
  c.protocol = Protocol::scan;
  c.seed = 7;
  const auto be = species_from_catalog("Be9");
  c.species = {{be, 15}};
  PenningTrap p;
  p.magnetic_field = 4.5;
  p.z0 = 1e-3;
  p.r0 = 1e-3;
  const double wc = be.charge * p.magnetic_field / be.mass;
  p.rotation_angular_frequency = wc / 2;
  p.u0 = penning_u0_for(p, be, 0.05 * wc);
  c.trap.geometry = p;
  c.scan.parameter = ScanParameter::normalized_axial_frequency;
  for (double v = 0.02; v < 0.705; v *= 1.15) c.scan.values.push_back(v);
  const auto rows = run_scan(c);
  std::vector<StructureLabel> seq;
  for (const auto& r : rows) {
    if (seq.empty() || seq.back() != r.label) seq.push_back(r.label);
  }
  const std::vector<StructureLabel> want{StructureLabel::linear, StructureLabel::zigzag, StructureLabel::shell3d,
                                         StructureLabel::planar};
  std::string s;
  for (auto l : seq) s += std::string(s.empty() ? "" : " -> ") + to_string(l);
  bool converged = true;
  for (const auto& r : rows) converged = converged && r.converged;
  return {seq == want && converged, strf("%zu points, wz/wc %.3g..%.3g: %s", rows.size(), rows.front().value,
                                         rows.back().value, s.c_str())};
}

// 14 --------------------------------------------------------------------
ExperimentConfig planar_image_config(bool gated) {
  ExperimentConfig c;
  c.protocol = Protocol::image;
  c.seed = 14;
  const auto be = species_from_catalog("Be9");
  c.species = {{be, 19}};
  PenningTrap p;
  p.magnetic_field = 4.5;
  p.z0 = 1e-3;
  p.r0 = 1e-3;
  const double wc = be.charge * p.magnetic_field / be.mass;
  const double wz = to_angular(200e3);
  p.u0 = penning_u0_for(p, be, wz);
  // Rotation just above magnetron: weak radial well, so a single plane.
  const double target = 0.53 * wz * wz;  // wr (wc - wr) = beta^2 + wz^2/2 with beta^2 = 0.03 wz^2
  p.rotation_angular_frequency = (wc - std::sqrt(wc * wc - 4 * target)) / 2;
  c.trap.geometry = p;
  auto& cam = c.image.camera;
  const double wr = p.rotation_angular_frequency;
  const double period = kTwoPi / wr;
  cam.exposure = 20 * period;
  cam.view_axis = ViewAxis::z;
  cam.width = cam.height = 200;
  cam.blur_angular_frequency = wr;
  c.image.sample_interval = period / 1000.0;
  if (gated) {
    cam.gate.enabled = true;
    cam.gate.reference = GateReference::rotation;
    cam.gate.reference_angular_frequency = wr;
    cam.gate.phase_window = 0.02;
  }
  return c;
}

Outcome imaging() {
  // Gated: spot centroids vs projected equilibrium positions.
  const auto cg = planar_image_config(true);
  const auto eq = relax_for(cg);
  const auto shape = classify_structure(eq.positions);
  const Image gated = image_for(cg);
  double worst = 0.0;
  const auto& cam = cg.image.camera;
  for (const auto& r : eq.positions) {
    const auto [col, row] = pixel_coordinates(cam, r);
    const double radius = 3.0 * cam.psf_sigma / cam.pixel_pitch;
    const auto [cc, cr] = oracle::centroid(gated.pixels, gated.width, gated.height, col, row, radius);
    worst = std::max(worst, std::hypot(cc - col, cr - row));
  }
  // Ungated: radial profile per azimuth sector.
  const auto cu = planar_image_config(false);
  const Image blur = image_for(cu);
  const int sectors = 8;
  const double cx = (blur.width - 1) / 2.0, cy = (blur.height - 1) / 2.0;
  const int bins = static_cast<int>(std::hypot(cx, cy) / 4.0) + 1;
  std::vector<std::vector<double>> prof(sectors, std::vector<double>(bins, 0.0));
  std::vector<std::vector<int>> pixels(sectors, std::vector<int>(bins, 0));
  for (int row = 0; row < blur.height; ++row)
    for (int col = 0; col < blur.width; ++col) {
      const double dx = col - cx, dy = cy - row;
      const int sector = std::min(sectors - 1, static_cast<int>((std::atan2(dy, dx) + oracle::pi) / (2 * oracle::pi) * sectors));
      const int bin = static_cast<int>(std::hypot(dx, dy) / 4.0);
      prof[sector][bin] += blur.at(col, row);
      pixels[sector][bin] += 1;
    }
  // Mean pixel value per (sector, ring); rings too small to split into
  // sectors of 50+ pixels are skipped.
  double peak_bin = 0.0, worst_ring = 0.0;
  std::vector<double> mean(bins, 0.0);
  std::vector<bool> usable(bins, true);
  for (int b = 0; b < bins; ++b) {
    for (int s = 0; s < sectors; ++s) {
      usable[b] = usable[b] && pixels[s][b] >= 50;
      if (pixels[s][b] > 0) prof[s][b] /= pixels[s][b];
      mean[b] += prof[s][b] / sectors;
    }
    if (usable[b]) peak_bin = std::max(peak_bin, mean[b]);
  }
  int rings = 0;
  for (int b = 0; b < bins; ++b) {
    if (!usable[b] || mean[b] < 0.05 * peak_bin) continue;
    ++rings;
    for (int s = 0; s < sectors; ++s) worst_ring = std::max(worst_ring, std::abs(prof[s][b] / mean[b] - 1));
  }
  // Golden files: two serial runs through the full protocol give identical bytes.
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "icc_acceptance_golden";
  fs::remove_all(root);
  std::vector<std::string> bytes;
  for (int k = 0; k < 2; ++k) {
    auto c = cg;
    c.output.directory = (root / ("run" + std::to_string(k))).string();
    const auto m = run(c);
    std::ifstream in(fs::path(c.output.directory) / "image.pgm", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes.push_back(m.exit_code == 0 ? ss.str() : std::string());
  }
  const bool identical = !bytes[0].empty() && bytes[0] == bytes[1];
  fs::remove_all(root);
  const bool ok = shape == StructureLabel::planar && worst <= 0.5 && worst_ring <= 0.05 && rings > 0 && identical;
  return {ok, strf("%s crystal of 19 ions: worst gated centroid offset %.3f px; ungated profile over %d rings, max sector "
                   "deviation %.2f%%; graymap reruns byte-identical: %s",
                   to_string(shape), worst, rings, 100 * worst_ring, identical ? "yes" : "no")};
}

// 15 --------------------------------------------------------------------
Outcome hygiene() {
  const auto ca = ca40();
  const SpeciesTable sp{ca};
  const auto t = linear_trap(ca, to_angular(1e6), to_angular(300e3), 0.05);
  Rng rng(15);
  std::vector<Vec3> pos;
  for (int i = 0; i < 10; ++i) pos.push_back(Vec3{rng.gaussian(), rng.gaussian(), 3 * rng.gaussian()} * 10e-6);
  const SystemState s = make_state(pos);
  const auto q = charges_of(s, sp);
  const auto coul = coulomb_forces(s.positions, q);
  double worst = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Vec3 f = coul[i] + trap_force(t, ca, pos[i], 0.0);
    for (int k = 0; k < 3; ++k) {
      auto energy = [&](double x) {
        SystemState m = s;
        m.positions[i][k] = x;
        return total_potential_energy(m, sp, t).total;
      };
      const double fd = -oracle::derivative(energy, pos[i][k], 1e-10);
      worst = std::max(worst, std::abs(fd - f[k]) / norm(f));
    }
  }
  // Undamped 3-ion crystal, 1e5 steps.
  const auto eq = relax_chain(3, sp, t);
  SystemState c = eq.state();
  Rng vr(16);
  thermalize_velocities(c, sp, 1e-3, vr);
  Integrator integ(sp, t, {});
  const double dt = 0.25 * max_timestep(c, sp, t);
  auto energy = [&](const SystemState& st) {
    const auto o = observe(st, sp, t);
    return o.total_energy;
  };
  const double e0 = energy(c);
  const double ke0 = observe(c, sp, t).kinetic_energy;
  double drift = 0.0;
  for (int k = 0; k < 100000; ++k) {
    integ.step(c, dt, vr);
    if (k % 100 == 99) drift = std::max(drift, std::abs(energy(c) - e0));
  }
  const bool ok = worst <= 1e-6 && drift / std::abs(e0) < 1e-6;
  return {ok, strf("force vs FD gradient max rel dev %.2e; energy drift over 1e5 steps %.2e of total (%.2e of the "
                   "initial kinetic energy)",
                   worst, drift / std::abs(e0), drift / ke0)};
}

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // s, 0 = none stated
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "two-ion spacing", 1.0, two_ion_spacing_check},
      {2, "breathing mode", 10.0, breathing_mode},
      {3, "centre-of-mass modes", 0.0, com_modes},
      {4, "central spacing law", 120.0, spacing_law},
      {5, "zigzag critical point", 0.0, zigzag_point},
      {6, "Penning identities", 0.0, penning_identities},
      {7, "rotation-density", 0.0, rotation_density_check},
      {8, "thermostat", 0.0, thermostat},
      {9, "micromotion consistency", 0.0, micromotion},
      {10, "crystallization trajectory", 600.0, crystallization},
      {11, "Kibble-Zurek scaling", 1800.0, kibble_zurek},
      {12, "species separation", 0.0, separation},
      {13, "structure scan", 0.0, structure_scan},
      {14, "imaging", 0.0, imaging},
      {15, "numerical hygiene", 0.0, hygiene},
  };
  std::set<int> pick;
  for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit <= 0.0 || secs < c.time_limit;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::string limit = c.time_limit > 0 ? strf(", limit %.0f s", c.time_limit) : "";
    std::printf("%s  %2d %-27s %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                limit.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
