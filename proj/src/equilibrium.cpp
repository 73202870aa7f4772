#include "icc/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <tuple>

#include "icc/constants.hpp"
#include "icc/error.hpp"
#include "icc/linalg.hpp"
#include "icc/modes.hpp"

namespace icc {
namespace {

constexpr double kJitter = 0.1e-6;  // m
constexpr double kInf = std::numeric_limits<double>::infinity();

// Energy landscape in units of l (length) and k_e e^2 / l (energy). Charges
// are stored as (q/e)/sqrt(k_e) so the SI Coulomb kernels can be reused.
struct ScaledProblem {
  std::size_t n = 0;
  double length = 0.0;
  double energy_unit = 0.0;
  double force_unit = 0.0;
  std::vector<double> kernel_charge;
  std::vector<double> charge_number;
  std::vector<StaticWell> wells;

  std::vector<Vec3> unpack(std::span<const double> x) const {
    std::vector<Vec3> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
    return p;
  }

  double energy(std::span<const double> x) const {
    const auto p = unpack(x);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e += wells[i].energy(p[i]);
    try {
      e += coulomb_energy(p, kernel_charge);
    } catch (const PhysicsError&) {
      return kInf;
    }
    return e;
  }

  // Gradient into g; returns energy (inf when two ions nearly coincide).
  double energy_gradient(std::span<const double> x, std::vector<double>& g) const {
    const auto p = unpack(x);
    std::vector<Vec3> f(n);
    double e = 0.0;
    try {
      coulomb_forces_serial(p, kernel_charge, f);
      e = coulomb_energy(p, kernel_charge);
    } catch (const PhysicsError&) {
      return kInf;
    }
    g.assign(3 * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      e += wells[i].energy(p[i]);
      const Vec3 total = f[i] + wells[i].force(p[i]);
      g[3 * i] = -total.x;
      g[3 * i + 1] = -total.y;
      g[3 * i + 2] = -total.z;
    }
    return e;
  }

  Matrix hessian(std::span<const double> x) const { return potential_hessian(unpack(x), kernel_charge, wells); }

  // Energy change when ion i moves from its current place to `to`.
  double move_delta(std::span<const Vec3> p, std::size_t i, const Vec3& to) const {
    double d = wells[i].energy(to) - wells[i].energy(p[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double rn = norm(to - p[j]);
      if (rn < 1e-6) return kInf;
      d += charge_number[i] * charge_number[j] * (1.0 / rn - 1.0 / norm(p[i] - p[j]));
    }
    return d;
  }
};

double max_ion_norm(std::span<const double> v) {
  double m = 0.0;
  for (std::size_t i = 0; i + 2 < v.size(); i += 3) m = std::max(m, std::sqrt(v[i] * v[i] + v[i + 1] * v[i + 1] + v[i + 2] * v[i + 2]));
  return m;
}

double dotv(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ScaledProblem make_problem(const SystemState& s, const SpeciesTable& species, const TrapConfig& trap) {
  ScaledProblem p;
  p.n = s.size();
  const IonSpecies& ref = species[s.species_index.front()];
  const StaticWell ref_well = static_well(trap, ref);
  const double k_mean = (ref_well.stiffness.x + ref_well.stiffness.y + ref_well.stiffness.z) / 3.0;
  const double e = PhysicalConstants::elementary_charge;
  p.length = std::cbrt(kCoulomb * e * e / k_mean);
  p.energy_unit = kCoulomb * e * e / p.length;
  p.force_unit = p.energy_unit / p.length;
  const double k_unit = p.energy_unit / (p.length * p.length);
  for (std::size_t i = 0; i < p.n; ++i) {
    const IonSpecies& sp = species[s.species_index[i]];
    StaticWell w = static_well(trap, sp);
    w.stiffness = {w.stiffness.x / k_unit, w.stiffness.y / k_unit, w.stiffness.z / k_unit};
    w.uniform_force = w.uniform_force * (1.0 / p.force_unit);
    p.wells.push_back(w);
    p.charge_number.push_back(sp.charge / e);
    p.kernel_charge.push_back(sp.charge / e / std::sqrt(kCoulomb));
  }
  return p;
}

struct DescentOutcome {
  int iterations = 0;
};

// Limited-memory BFGS with Armijo backtracking and a per-ion step cap.
DescentOutcome lbfgs(const ScaledProblem& prob, std::vector<double>& x, double gtol, int max_iterations) {
  constexpr std::size_t kMemory = 12;
  constexpr double kMaxIonStep = 0.25;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> g, g_new, d(x.size()), x_new(x.size());
  double e = prob.energy_gradient(x, g);
  DescentOutcome out;
  int failures = 0;
  for (; out.iterations < max_iterations; ++out.iterations) {
    if (max_ion_norm(g) < gtol) break;
    // Two-loop recursion.
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dotv(s_hist[k], d);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = dotv(s_hist.back(), y_hist.back()) / dotv(y_hist.back(), y_hist.back());
    for (double& v : d) v *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dotv(y_hist[k], d);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    for (double& v : d) v = -v;
    double slope = dotv(g, d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = -g[i];
      slope = dotv(g, d);
    }
    double step = std::min(1.0, kMaxIonStep / std::max(max_ion_norm(d), 1e-300));
    if (s_hist.empty()) step = std::min(step, 0.1 / std::max(max_ion_norm(g), 1e-300));
    bool accepted = false;
    double e_new = kInf;
    // Below the energy roundoff the Armijo test is noise; there a step must
    // lower the largest ion gradient instead.
    const double noise = 1e-13 * (std::abs(e) + 1.0);
    const double gmax = max_ion_norm(g);
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = x[i] + step * d[i];
      e_new = prob.energy_gradient(x_new, g_new);
      const bool flat = std::abs(step * slope) < noise;
      if ((!flat && e_new <= e + 1e-4 * step * slope) ||
          (flat && e_new <= e + 10.0 * noise && max_ion_norm(g_new) < gmax)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Roundoff floor reached, or a bad quasi-Newton model: retry once along
      // the gradient, then give up.
      if (s_hist.empty() || ++failures > 3) break;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    std::vector<double> s(x.size()), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dotv(s, y);
    if (sy > 1e-14 * std::sqrt(dotv(s, s) * dotv(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    e = e_new;
  }
  return out;
}

// Newton iterations on the analytic Hessian; stops if the Hessian is not
// positive definite along the step.
int newton_polish(const ScaledProblem& prob, std::vector<double>& x, double gtol) {
  std::vector<double> g, g_new, x_new(x.size());
  prob.energy_gradient(x, g);
  int it = 0;
  for (; it < 30; ++it) {
    const double gmax = max_ion_norm(g);
    if (gmax < gtol) break;
    Matrix h = prob.hessian(x);
    double diag = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) diag = std::max(diag, std::abs(h(i, i)));
    for (std::size_t i = 0; i < h.size(); ++i) h(i, i) += 1e-12 * diag;
    std::vector<double> rhs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) rhs[i] = -g[i];
    std::vector<double> delta;
    try {
      delta = solve_linear(h, rhs);
    } catch (const PhysicsError&) {
      break;
    }
    if (!(dotv(delta, g) < 0.0)) break;
    double scale = std::min(1.0, 0.1 / std::max(max_ion_norm(delta), 1e-300));
    bool improved = false;
    for (int ls = 0; ls < 12; ++ls) {
      for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = x[i] + scale * delta[i];
      const double e_new = prob.energy_gradient(x_new, g_new);
      if (std::isfinite(e_new) && max_ion_norm(g_new) < gmax) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) break;
    x.swap(x_new);
    g.swap(g_new);
  }
  return it;
}

void anneal(const ScaledProblem& prob, std::vector<double>& x, const MinimizerOptions& opt, Rng& rng) {
  auto p = prob.unpack(x);
  const double t0 = PhysicalConstants::boltzmann * opt.anneal_start_temperature / prob.energy_unit;
  const double t1 = PhysicalConstants::boltzmann * opt.anneal_end_temperature / prob.energy_unit;
  const int levels = std::max(opt.anneal_levels, 1);
  double step = 0.1;
  for (int lev = 0; lev < levels; ++lev) {
    const double frac = levels == 1 ? 1.0 : static_cast<double>(lev) / (levels - 1);
    const double temp = t0 * std::pow(t1 / t0, frac);
    for (int sweep = 0; sweep < opt.anneal_sweeps_per_level; ++sweep) {
      std::size_t accepted = 0;
      for (std::size_t i = 0; i < prob.n; ++i) {
        const Vec3 trial = p[i] + Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()} * step;
        const double de = prob.move_delta(p, i, trial);
        if (de <= 0.0 || rng.uniform() < std::exp(-de / temp)) {
          p[i] = trial;
          ++accepted;
        }
      }
      const double rate = static_cast<double>(accepted) / static_cast<double>(prob.n);
      step *= rate > 0.4 ? 1.1 : 0.9;
      step = std::clamp(step, 1e-6, 0.5);
    }
  }
  for (std::size_t i = 0; i < prob.n; ++i) {
    x[3 * i] = p[i].x;
    x[3 * i + 1] = p[i].y;
    x[3 * i + 2] = p[i].z;
  }
}

void canonicalize(EquilibriumResult& r, const TrapConfig& trap, double length) {
  const std::size_t n = r.positions.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    const Vec3& p = r.positions[i];
    return std::make_tuple(std::llround(p.z / length * 1e7), std::llround(p.x / length * 1e7),
                           std::llround(p.y / length * 1e7));
  };
  auto sort_all = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    std::vector<Vec3> pos(n);
    std::vector<std::size_t> sp(n);
    for (std::size_t k = 0; k < n; ++k) {
      pos[k] = r.positions[order[k]];
      sp[k] = r.species_index[order[k]];
    }
    r.positions = std::move(pos);
    r.species_index = std::move(sp);
  };
  sort_all();
  if (n == 0 || !trap.is_linear() || trap.linear().stray_field != Vec3{}) return;
  // Mirror tie-break: the central ion's dominant transverse coordinate >= 0.
  const Vec3 c = r.positions[n / 2];
  const double thresh = 1e-9 * length;
  bool flip_x = false, flip_y = false;
  if (std::abs(c.x) >= std::abs(c.y)) {
    flip_x = c.x < -thresh;
  } else {
    flip_y = c.y < -thresh;
  }
  if (!flip_x && !flip_y) return;
  for (auto& p : r.positions) {
    if (flip_x) p.x = -p.x;
    if (flip_y) p.y = -p.y;
  }
  sort_all();
}

}  // namespace

SystemState EquilibriumResult::state() const {
  SystemState s;
  s.positions = positions;
  s.velocities.assign(positions.size(), Vec3{});
  s.species_index = species_index;
  return s;
}

double string_length_scale(const IonSpecies& species, double axial) {
  return std::cbrt(kCoulomb * species.charge * species.charge / (species.mass * axial * axial));
}

double two_ion_spacing(const IonSpecies& species, double axial) {
  return std::cbrt(2.0 * kCoulomb * species.charge * species.charge / (species.mass * axial * axial));
}

std::vector<double> string_positions(int n, const IonSpecies& species, double axial) {
  if (n < 1 || n > 100) throw ConfigError("string_positions: N must be in [1, 100]");
  const auto N = static_cast<std::size_t>(n);
  std::vector<double> u(N);
  const double spacing = 2.0 * std::pow(static_cast<double>(n), -0.559);
  for (std::size_t i = 0; i < N; ++i) u[i] = (static_cast<double>(i) - 0.5 * (n - 1)) * spacing;

  auto energy = [&](const std::vector<double>& v) {
    double e = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      e += 0.5 * v[i] * v[i];
      for (std::size_t j = i + 1; j < N; ++j) {
        const double d = v[j] - v[i];
        if (!(d > 0.0)) return kInf;
        e += 1.0 / d;
      }
    }
    return e;
  };

  for (int it = 0; it < 200 && N > 1; ++it) {
    std::vector<double> g(N);
    Matrix h(N);
    for (std::size_t i = 0; i < N; ++i) {
      g[i] = u[i];
      h(i, i) = 1.0;
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i) continue;
        const double d = u[i] - u[j];
        const double ad = std::abs(d);
        g[i] -= (d > 0.0 ? 1.0 : -1.0) / (ad * ad);
        h(i, i) += 2.0 / (ad * ad * ad);
        h(i, j) = -2.0 / (ad * ad * ad);
      }
    }
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < 1e-14) break;
    for (double& v : g) v = -v;
    const auto step = solve_linear(h, g);
    const double e0 = energy(u);
    double t = 1.0;
    std::vector<double> trial(N);
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < N; ++i) trial[i] = u[i] + t * step[i];
      if (energy(trial) <= e0 + 1e-12 * std::abs(e0)) break;
      t *= 0.5;
    }
    u = trial;
  }
  const double l = string_length_scale(species, axial);
  std::vector<double> z(N);
  for (std::size_t i = 0; i < N; ++i) z[i] = 0.5 * (u[i] - u[N - 1 - i]) * l;
  return z;
}

SystemState axial_lattice_start(const std::vector<std::size_t>& species_index, const SpeciesTable& species,
                                const TrapConfig& trap, std::uint64_t seed) {
  const std::size_t n = species_index.size();
  if (n == 0) throw ConfigError("at least one ion is required");
  const IonSpecies& ref = species.at(species_index.front());
  const StaticWell w = static_well(trap, ref);
  const double lz = std::cbrt(kCoulomb * ref.charge * ref.charge / w.stiffness.z);
  const double spacing = 2.0 * lz * std::pow(static_cast<double>(n), -0.559);
  Rng rng = Rng::stream(seed, 0x1a77);
  SystemState s;
  s.species_index = species_index;
  s.velocities.assign(n, Vec3{});
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (static_cast<double>(i) - 0.5 * static_cast<double>(n - 1)) * spacing;
    s.positions.push_back(Vec3{rng.gaussian() * kJitter, rng.gaussian() * kJitter, z + rng.gaussian() * kJitter});
  }
  return s;
}

SystemState cloud_start(const std::vector<std::size_t>& species_index, const SpeciesTable& species,
                        const TrapConfig& trap, std::uint64_t seed) {
  const std::size_t n = species_index.size();
  if (n == 0) throw ConfigError("at least one ion is required");
  const IonSpecies& ref = species.at(species_index.front());
  const StaticWell w = static_well(trap, ref);
  const double q2 = kCoulomb * ref.charge * ref.charge;
  const double cube = std::cbrt(static_cast<double>(n));
  const Vec3 semi{std::cbrt(q2 / w.stiffness.x) * cube, std::cbrt(q2 / w.stiffness.y) * cube,
                  std::cbrt(q2 / w.stiffness.z) * cube};
  const double min_sep = 0.2 * std::min({semi.x, semi.y, semi.z}) / cube;
  Rng rng = Rng::stream(seed, 0xc10d);
  SystemState s;
  s.species_index = species_index;
  s.velocities.assign(n, Vec3{});
  while (s.positions.size() < n) {
    const Vec3 u{2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0};
    if (dot(u, u) > 1.0) continue;
    const Vec3 p{u.x * semi.x, u.y * semi.y, u.z * semi.z};
    bool ok = true;
    for (const auto& q : s.positions) ok = ok && norm(p - q) > min_sep;
    if (ok) s.positions.push_back(p);
  }
  return s;
}

EquilibriumResult relax(const SystemState& initial, const SpeciesTable& species, const TrapConfig& trap,
                        const MinimizerOptions& options) {
  check_state(initial, species);
  if (trap.rf_mode == RfMode::full_drive) {
    throw PhysicsError("relax needs a static confinement (pseudopotential or rotating frame)");
  }
  const std::size_t n = initial.size();
  if (n == 0) throw ConfigError("relax: empty state");
  // Throws on coincident starting ions.
  (void)coulomb_energy(initial.positions, charges_of(initial, species));

  const ScaledProblem prob = make_problem(initial, species, trap);
  const double gtol = std::clamp(0.1 * options.force_tolerance / prob.force_unit, 1e-13, 1e-10);

  std::vector<double> best;
  double best_energy = kInf;
  int iterations = 0;
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    std::vector<double> x(3 * n);
    Rng rng = Rng::stream(options.seed, 0xa11ea1 + static_cast<std::uint64_t>(attempt));
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 p = initial.positions[i];
      if (attempt > 0) p += Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()} * kJitter;
      x[3 * i] = p.x / prob.length;
      x[3 * i + 1] = p.y / prob.length;
      x[3 * i + 2] = p.z / prob.length;
    }
    if (options.anneal) anneal(prob, x, options, rng);
    const auto out = lbfgs(prob, x, options.newton_polish ? std::max(gtol, 1e-7) : gtol, options.max_iterations);
    iterations += out.iterations;
    if (options.newton_polish) {
      iterations += newton_polish(prob, x, gtol);
      // Finish with the quasi-Newton loop if polishing stopped early.
      iterations += lbfgs(prob, x, gtol, options.max_iterations).iterations;
      iterations += newton_polish(prob, x, gtol);
    }
    const double e = prob.energy(x);
    if (e < best_energy) {
      best_energy = e;
      best = x;
    }
  }

  EquilibriumResult r;
  r.restarts_used = options.restarts;
  r.iterations = iterations;
  r.species_index = initial.species_index;
  for (std::size_t i = 0; i < n; ++i) {
    r.positions.push_back(Vec3{best[3 * i], best[3 * i + 1], best[3 * i + 2]} * prob.length);
  }
  canonicalize(r, trap, prob.length);
  const SystemState s = r.state();
  r.energy = total_potential_energy(s, species, trap);
  r.gradient_norm = max_residual_force(s, species, trap);
  r.converged = r.gradient_norm < options.force_tolerance;
  return r;
}

double zigzag_critical_anisotropy(int n) {
  if (n < 3 || n > 50) throw ConfigError("zigzag_critical_anisotropy: N must be in [3, 50]");
  const IonSpecies ion = species_from_catalog("Ca40");
  const double wz = kTwoPi * 1e6;
  const auto z = string_positions(n, ion, wz);
  std::vector<Vec3> pos;
  for (double zi : z) pos.push_back({0.0, 0.0, zi});
  const SystemState string = make_state(pos);
  const SpeciesTable table{ion};

  auto lowest_sq = [&](double ratio) {
    const LinearRfTrap trap = linear_trap_from_frequencies(ion, std::sqrt(ratio) * wz, wz, kTwoPi * 1e9, 1e-3);
    const double force_scale = kCoulomb * ion.charge * ion.charge / std::pow(string_length_scale(ion, wz), 2);
    const auto spec = transverse_spectrum(string, table, trap, 1e-9 * force_scale);
    return spec.squared_frequencies.front();
  };
  double lo = 1.0;
  double hi = 2.0;
  while (lowest_sq(hi) <= 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (lowest_sq(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace icc
