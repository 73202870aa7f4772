#include "icc/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "icc/constants.hpp"
#include "icc/error.hpp"
#include "icc/linalg.hpp"
#include "icc/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace icc {
namespace {

constexpr double kShapeTolerance = 1e-3;

struct PrincipalFrame {
  Vec3 centroid;
  std::array<Vec3, 3> axes;       // descending variance
  std::array<double, 3> variance;
};

PrincipalFrame principal_frame(std::span<const Vec3> p) {
  PrincipalFrame f;
  for (const auto& r : p) f.centroid += r;
  f.centroid *= 1.0 / static_cast<double>(p.size());
  Matrix c(3);
  for (const auto& r : p) {
    const Vec3 d = r - f.centroid;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) c(a, b) += d[a] * d[b];
  }
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) c(a, b) /= static_cast<double>(p.size());
  const auto eig = jacobi_eigen(c, 1e-15);
  for (int k = 0; k < 3; ++k) {
    const int src = 2 - k;
    f.axes[k] = {eig.vectors(0, src), eig.vectors(1, src), eig.vectors(2, src)};
    f.variance[k] = std::max(eig.values[src], 0.0);
  }
  return f;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

const char* to_string(PlasmaRegime regime) {
  switch (regime) {
    case PlasmaRegime::gas:
      return "gas";
    case PlasmaRegime::liquid:
      return "liquid";
    case PlasmaRegime::crystal_candidate:
      return "crystal-candidate";
  }
  return "gas";
}

const char* to_string(StructureLabel label) {
  switch (label) {
    case StructureLabel::linear:
      return "linear";
    case StructureLabel::zigzag:
      return "zigzag";
    case StructureLabel::helix:
      return "helix";
    case StructureLabel::shell3d:
      return "shell3d";
    case StructureLabel::planar:
      return "planar";
  }
  return "shell3d";
}

const char* to_string(DefectKind kind) { return kind == DefectKind::odd ? "odd" : "extended"; }

double coupling_parameter(double temperature, double a0) {
  if (!(temperature > 0.0) || !(a0 > 0.0)) throw ConfigError("coupling_parameter: T and a0 must be positive");
  const double e = PhysicalConstants::elementary_charge;
  return kCoulomb * e * e / (a0 * PhysicalConstants::boltzmann * temperature);
}

double wigner_seitz(double n) {
  if (!(n > 0.0)) throw ConfigError("wigner_seitz: density must be positive");
  return std::cbrt(3.0 / (4.0 * kPi * n));
}

double density_from_wigner_seitz(double a0) {
  if (!(a0 > 0.0)) throw ConfigError("density_from_wigner_seitz: radius must be positive");
  return 3.0 / (4.0 * kPi * a0 * a0 * a0);
}

PlasmaRegime classify_regime(double gamma) {
  if (gamma < kGasLiquidGamma) return PlasmaRegime::gas;
  if (gamma < kCrystallizationGamma) return PlasmaRegime::liquid;
  return PlasmaRegime::crystal_candidate;
}

PlasmaReport plasma_report(double temperature, double n) {
  PlasmaReport r;
  r.number_density = n;
  r.wigner_seitz_radius = wigner_seitz(n);
  r.gamma = coupling_parameter(temperature, r.wigner_seitz_radius);
  r.regime = classify_regime(r.gamma);
  return r;
}

double rotation_density(const PenningTrap& trap, const IonSpecies& species, double wr) {
  const double wc = species.charge * trap.magnetic_field / species.mass;
  if (wr < 0.0 || wr > wc) throw PhysicsError("rotation_density: rotation frequency outside [0, wc]");
  return 2.0 * PhysicalConstants::vacuum_permittivity * species.mass * wr * (wc - wr) /
         (species.charge * species.charge);
}

double cloud_density(std::span<const Vec3> p) {
  if (p.size() < 4) throw ConfigError("cloud_density: need at least 4 ions");
  const auto f = principal_frame(p);
  const double volume = 4.0 / 3.0 * kPi * std::sqrt(125.0 * f.variance[0] * f.variance[1] * f.variance[2]);
  if (!(volume > 0.0)) throw PhysicsError("cloud_density: cloud is not three-dimensional");
  return static_cast<double>(p.size()) / volume;
}

double median_neighbor_distance(std::span<const Vec3> p) {
  if (p.size() < 2) return 0.0;
  std::vector<double> nn(p.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double d = norm(p[i] - p[j]);
      nn[i] = std::min(nn[i], d);
      nn[j] = std::min(nn[j], d);
    }
  return quantile(nn, 0.5);
}

double interior_voronoi_density(std::span<const Vec3> p, double interior_fraction, std::size_t samples,
                                std::uint64_t seed) {
  if (p.size() < 8) throw ConfigError("interior_voronoi_density: need at least 8 ions");
  const auto f = principal_frame(p);
  std::array<double, 3> semi{};
  for (int k = 0; k < 3; ++k) semi[k] = std::sqrt(5.0 * f.variance[k]);
  std::vector<bool> interior(p.size());
  std::size_t n_in = 0;
  Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec3 d = p[i] - f.centroid;
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double c = semi[k] > 0.0 ? dot(d, f.axes[k]) / semi[k] : 0.0;
      s += c * c;
    }
    interior[i] = std::sqrt(s) < interior_fraction;
    if (!interior[i]) continue;
    ++n_in;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[i][a]);
      hi[a] = std::max(hi[a], p[i][a]);
    }
  }
  if (n_in == 0) throw PhysicsError("interior_voronoi_density: no interior ions");
  const double margin = 2.0 * median_neighbor_distance(p);
  lo -= Vec3{margin, margin, margin};
  hi += Vec3{margin, margin, margin};
  const Vec3 span = hi - lo;
  Rng rng = Rng::stream(seed, 0x7012);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec3 x{lo.x + span.x * rng.uniform(), lo.y + span.y * rng.uniform(), lo.z + span.z * rng.uniform()};
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec3 d = x - p[i];
      const double d2 = dot(d, d);
      if (d2 < best_d) {
        best_d = d2;
        best = i;
      }
    }
    if (interior[best]) ++hits;
  }
  const double volume = span.x * span.y * span.z * static_cast<double>(hits) / static_cast<double>(samples);
  return static_cast<double>(n_in) / volume;
}

StructureLabel classify_structure(std::span<const Vec3> p) {
  if (p.size() <= 2) return StructureLabel::linear;
  const double l = median_neighbor_distance(p);
  const double tol = kShapeTolerance * l;
  const auto f = principal_frame(p);
  const std::size_t n = p.size();
  std::vector<std::array<double, 3>> c(n);
  std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  double max_off_axis = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = p[i] - f.centroid;
    for (int k = 0; k < 3; ++k) {
      c[i][k] = dot(d, f.axes[k]);
      lo[k] = std::min(lo[k], c[i][k]);
      hi[k] = std::max(hi[k], c[i][k]);
    }
    max_off_axis = std::max(max_off_axis, std::hypot(c[i][1], c[i][2]));
  }
  if (max_off_axis < tol) return StructureLabel::linear;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a][0] < c[b][0]; });
  const double extent1 = hi[0] - lo[0];
  const double extent2 = hi[1] - lo[1];
  const double extent3 = hi[2] - lo[2];

  if (extent3 < tol) {
    // Flat: zigzag if the in-plane transverse coordinate alternates in sign
    // along the long axis (ions sitting on the axis carry no sign).
    bool alternating = extent1 > extent2;
    int last_sign = 0;
    std::size_t signed_count = 0;
    for (std::size_t k = 0; k < n && alternating; ++k) {
      const double t = c[order[k]][1];
      if (std::abs(t) < tol) continue;
      const int s = t > 0.0 ? 1 : -1;
      if (last_sign != 0 && s == last_sign) alternating = false;
      last_sign = s;
      ++signed_count;
    }
    if (alternating && signed_count >= 2) return StructureLabel::zigzag;
    return StructureLabel::planar;
  }

  // Helix: elongated, every ion off the axis, transverse phase advancing in
  // one sense by a roughly constant step of at most a third of a turn.
  if (extent1 > 2.0 * std::max(extent2, extent3)) {
    bool helix = true;
    std::vector<double> steps;
    double prev = 0.0;
    for (std::size_t k = 0; k < n && helix; ++k) {
      const auto& q = c[order[k]];
      if (std::hypot(q[1], q[2]) < tol) helix = false;
      const double phase = std::atan2(q[2], q[1]);
      if (k > 0) steps.push_back(std::remainder(phase - prev, kTwoPi));
      prev = phase;
    }
    if (helix && !steps.empty()) {
      std::vector<double> mag;
      for (double s : steps) mag.push_back(std::abs(s));
      const double med = quantile(mag, 0.5);
      helix = med > 1e-6 && med <= kTwoPi / 3.0;
      for (double s : steps) {
        helix = helix && (s > 0.0) == (steps.front() > 0.0) && std::abs(s) >= 0.5 * med && std::abs(s) <= 1.5 * med;
      }
    }
    if (helix) return StructureLabel::helix;
  }
  return StructureLabel::shell3d;
}

DefectReport detect_defects(std::span<const Vec3> chain, double noise_floor) {
  const std::size_t n = chain.size();
  if (n < 2) throw PhysicsError("detect_defects: chain too short");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return chain[a].z < chain[b].z; });

  // Dominant transverse axis from the x/y covariance about the z axis.
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& r : chain) {
    sxx += r.x * r.x;
    syy += r.y * r.y;
    sxy += r.x * r.y;
  }
  const double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  const double ux = std::cos(angle), uy = std::sin(angle);
  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) s[k] = chain[order[k]].x * ux + chain[order[k]].y * uy;

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < n; ++k)
    if (std::abs(s[k]) > noise_floor) active.push_back(k);
  if (active.empty()) {
    throw PhysicsError("detect_defects: chain is not in the zigzag regime (all displacements below the noise floor)");
  }
  auto parity = [&](std::size_t k) { return (s[k] > 0.0 ? 1 : -1) * (k % 2 == 0 ? 1 : -1); };

  DefectReport report;
  for (std::size_t a = 0; a + 1 < active.size(); ++a) {
    const std::size_t left = active[a];
    const std::size_t right = active[a + 1];
    if (parity(left) == parity(right)) continue;
    // Reference amplitude from the neighbourhood; count weak ions near the wall.
    double ref = 0.0;
    const std::size_t lo6 = left >= 6 ? left - 6 : 0;
    const std::size_t hi6 = std::min(n - 1, right + 6);
    for (std::size_t k = lo6; k <= hi6; ++k) ref = std::max(ref, std::abs(s[k]));
    std::size_t weak = right - left - 1;  // ions below the floor inside the wall
    const std::size_t lo3 = left >= 3 ? left - 3 : 0;
    const std::size_t hi3 = std::min(n - 1, right + 3);
    for (std::size_t k = lo3; k <= hi3; ++k) {
      if (std::abs(s[k]) > noise_floor && std::abs(s[k]) < 0.5 * ref) ++weak;
    }
    report.kinds.push_back(weak >= 3 ? DefectKind::extended : DefectKind::odd);
    report.boundary_positions.emplace_back(left, right);
  }
  report.defect_count = report.kinds.size();
  return report;
}

SeparationReport species_separation(const SystemState& state, const SpeciesTable& species) {
  check_state(state, species);
  SeparationReport r;
  const std::size_t ns = species.size();
  std::vector<std::vector<double>> radii(ns);
  for (std::size_t i = 0; i < state.size(); ++i) radii[state.species_index[i]].push_back(cylindrical_radius(state.positions[i]));
  r.mean_radius.assign(ns, 0.0);
  r.lower_quartile.assign(ns, 0.0);
  r.upper_quartile.assign(ns, 0.0);
  r.count.assign(ns, 0);
  std::vector<std::size_t> present;
  for (std::size_t s = 0; s < ns; ++s) {
    r.count[s] = radii[s].size();
    if (radii[s].empty()) continue;
    present.push_back(s);
    r.mean_radius[s] = std::accumulate(radii[s].begin(), radii[s].end(), 0.0) / static_cast<double>(radii[s].size());
    r.lower_quartile[s] = quantile(radii[s], 0.25);
    r.upper_quartile[s] = quantile(radii[s], 0.75);
  }
  if (present.size() < 2) return r;
  std::sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
    return species[a].mass / species[a].charge < species[b].mass / species[b].charge;
  });
  bool ok = true;
  for (std::size_t k = 0; k + 1 < present.size(); ++k) {
    const std::size_t inner = present[k];
    const std::size_t outer = present[k + 1];
    ok = ok && r.mean_radius[inner] < r.mean_radius[outer] && r.upper_quartile[inner] < r.lower_quartile[outer];
  }
  r.separated = ok;
  return r;
}

std::vector<double> structure_factor_serial(std::span<const Vec3> p, std::span<const Vec3> k_grid) {
  if (p.empty()) throw ConfigError("structure_factor: no ions");
  std::vector<double> out(k_grid.size());
  for (std::size_t g = 0; g < k_grid.size(); ++g) {
    double re = 0.0, im = 0.0;
    for (const auto& r : p) {
      const double ph = dot(k_grid[g], r);
      re += std::cos(ph);
      im += std::sin(ph);
    }
    out[g] = (re * re + im * im) / static_cast<double>(p.size());
  }
  return out;
}

std::vector<double> structure_factor_parallel(std::span<const Vec3> p, std::span<const Vec3> k_grid) {
  if (p.empty()) throw ConfigError("structure_factor: no ions");
  std::vector<double> out(k_grid.size());
  const auto m = static_cast<std::ptrdiff_t>(k_grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t g = 0; g < m; ++g) {
    double re = 0.0, im = 0.0;
    for (const auto& r : p) {
      const double ph = dot(k_grid[g], r);
      re += std::cos(ph);
      im += std::sin(ph);
    }
    out[g] = (re * re + im * im) / static_cast<double>(p.size());
  }
  return out;
}

std::vector<double> structure_factor(std::span<const Vec3> p, std::span<const Vec3> k_grid) {
#ifdef _OPENMP
  if (k_grid.size() >= 64 && !omp_in_parallel() && omp_get_max_threads() > 1) return structure_factor_parallel(p, k_grid);
#endif
  return structure_factor_serial(p, k_grid);
}

std::vector<double> ring_profile(std::span<const Vec3> p, std::span<const double> k_magnitudes, const Vec3& axis,
                                 int azimuth_samples) {
  if (azimuth_samples < 1) throw ConfigError("ring_profile: need at least one azimuth sample");
  const double an = norm(axis);
  if (!(an > 0.0)) throw ConfigError("ring_profile: axis must be non-zero");
  const Vec3 w = axis * (1.0 / an);
  const Vec3 helper = std::abs(w.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  Vec3 u = cross(w, helper);
  u *= 1.0 / norm(u);
  const Vec3 v = cross(w, u);
  std::vector<Vec3> grid;
  for (double k : k_magnitudes) {
    for (int a = 0; a < azimuth_samples; ++a) {
      const double phi = kTwoPi * a / azimuth_samples;
      grid.push_back((u * std::cos(phi) + v * std::sin(phi)) * k);
    }
  }
  const auto s = structure_factor(p, grid);
  std::vector<double> out(k_magnitudes.size(), 0.0);
  for (std::size_t i = 0; i < k_magnitudes.size(); ++i) {
    for (int a = 0; a < azimuth_samples; ++a) out[i] += s[i * azimuth_samples + a];
    out[i] /= azimuth_samples;
  }
  return out;
}

}  // namespace icc
