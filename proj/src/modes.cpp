#include "icc/modes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "icc/constants.hpp"
#include "icc/equilibrium.hpp"
#include "icc/error.hpp"
#include "icc/interactions.hpp"

namespace icc {
namespace {

constexpr double kLabelFraction = 0.9;
constexpr double kSymmetryTolerance = 1e-10;

ModeLabel label_for(const std::vector<double>& v) {
  double axial = 0.0, total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    total += v[i] * v[i];
    if (i % 3 == 2) axial += v[i] * v[i];
  }
  if (total <= 0.0) return ModeLabel::mixed;
  if (axial >= kLabelFraction * total) return ModeLabel::axial;
  if (total - axial >= kLabelFraction * total) return ModeLabel::transverse;
  return ModeLabel::mixed;
}

std::size_t argmax_abs(const std::vector<double>& v) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[k])) k = i;
  return k;
}

// Builds a spectrum from eigenvalues and 3N-component vectors, applying the
// degenerate-mode tie-break.
ModeSpectrum assemble(std::vector<double> values, std::vector<std::vector<double>> vectors) {
  const std::size_t m = values.size();
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  // Within runs of equal eigenvalues, order by the dominant component index.
  for (std::size_t start = 0; start < m;) {
    std::size_t end = start + 1;
    while (end < m && std::abs(values[order[end]] - values[order[start]]) <= 1e-10 * scale) ++end;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return argmax_abs(vectors[a]) < argmax_abs(vectors[b]); });
    start = end;
  }
  ModeSpectrum s;
  for (std::size_t k : order) {
    double nrm = 0.0;
    for (double c : vectors[k]) nrm += c * c;
    nrm = std::sqrt(nrm);
    if (nrm > 0.0)
      for (double& c : vectors[k]) c /= nrm;
    s.squared_frequencies.push_back(values[k]);
    s.frequencies.push_back(std::sqrt(std::abs(values[k])));
    s.imaginary.push_back(values[k] < 0.0);
    s.labels.push_back(label_for(vectors[k]));
    s.eigenvectors.push_back(std::move(vectors[k]));
  }
  return s;
}

}  // namespace

const char* to_string(ModeLabel label) {
  switch (label) {
    case ModeLabel::axial:
      return "axial";
    case ModeLabel::transverse:
      return "transverse";
    case ModeLabel::mixed:
      return "mixed";
  }
  return "mixed";
}

bool ModeSpectrum::has_imaginary() const { return std::find(imaginary.begin(), imaginary.end(), true) != imaginary.end(); }

std::vector<double> ModeSpectrum::frequencies_with(ModeLabel label) const {
  std::vector<double> out;
  for (std::size_t k = 0; k < size(); ++k)
    if (labels[k] == label) out.push_back(frequencies[k]);
  return out;
}

double max_residual_force(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap) {
  check_state(state, species);
  const auto f = coulomb_forces(state.positions, charges_of(state, species));
  double worst = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const Vec3 total = f[i] + static_well(trap, species[state.species_index[i]]).force(state.positions[i]);
    worst = std::max(worst, norm(total));
  }
  return worst;
}

Matrix hessian(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap, double force_tolerance) {
  const double residual = max_residual_force(state, species, trap);
  if (!(residual <= force_tolerance)) {
    throw PhysicsError("state is not an equilibrium: residual force " + std::to_string(residual) +
                       " N exceeds tolerance " + std::to_string(force_tolerance) + " N");
  }
  Matrix h = potential_hessian(state, species, trap);
  const auto m = masses_of(state, species);
  for (std::size_t r = 0; r < h.size(); ++r)
    for (std::size_t c = 0; c < h.size(); ++c) h(r, c) /= std::sqrt(m[r / 3] * m[c / 3]);
  return h;
}

ModeSpectrum mode_spectrum(const Matrix& h) {
  if (h.asymmetry() > kSymmetryTolerance) {
    throw PhysicsError("mode_spectrum: Hessian is not symmetric (relative asymmetry " + std::to_string(h.asymmetry()) +
                       ")");
  }
  const auto eig = jacobi_eigen(h);
  std::vector<std::vector<double>> vecs(h.size(), std::vector<double>(h.size()));
  for (std::size_t k = 0; k < h.size(); ++k)
    for (std::size_t r = 0; r < h.size(); ++r) vecs[k][r] = eig.vectors(r, k);
  return assemble(eig.values, std::move(vecs));
}

ModeSpectrum transverse_spectrum(const SystemState& string, const SpeciesTable& species, const LinearRfTrap& trap,
                                 double force_tolerance) {
  const TrapConfig cfg{trap, RfMode::pseudopotential};
  const Matrix full = hessian(string, species, cfg, force_tolerance);
  const std::size_t n = string.size();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    idx.push_back(3 * i);
    idx.push_back(3 * i + 1);
  }
  Matrix block(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) block(a, b) = full(idx[a], idx[b]);
  if (block.asymmetry() > kSymmetryTolerance) throw PhysicsError("transverse_spectrum: asymmetric Hessian block");
  const auto eig = jacobi_eigen(block);
  std::vector<std::vector<double>> vecs(idx.size(), std::vector<double>(3 * n, 0.0));
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t a = 0; a < idx.size(); ++a) vecs[k][idx[a]] = eig.vectors(a, k);
  return assemble(eig.values, std::move(vecs));
}

ModeSpectrum rotating_frame_spectrum(const SystemState& state, const SpeciesTable& species, const PenningTrap& trap,
                                     bool include_gyro, double force_tolerance) {
  const TrapConfig cfg{trap, RfMode::pseudopotential};
  const Matrix k = hessian(state, species, cfg, force_tolerance);
  const std::size_t d = k.size();
  const auto ek = jacobi_eigen(k);
  const double kmax = std::max(std::abs(ek.values.front()), std::abs(ek.values.back()));
  if (ek.values.front() < -1e-9 * kmax) {
    throw PhysicsError("rotating_frame_spectrum: stiffness matrix has a negative eigenvalue (saddle point)");
  }
  // R = K^(1/2)
  Matrix r(d);
  for (std::size_t m = 0; m < d; ++m) {
    const double root = std::sqrt(std::max(ek.values[m], 0.0));
    if (root == 0.0) continue;
    for (std::size_t a = 0; a < d; ++a) {
      const double va = ek.vectors(a, m) * root;
      for (std::size_t b = 0; b < d; ++b) r(a, b) += va * ek.vectors(b, m);
    }
  }
  Matrix g(d);
  if (include_gyro) {
    for (std::size_t i = 0; i < state.size(); ++i) {
      const double rate = rotating_frame_gyro_rate(trap, species[state.species_index[i]]);
      g(3 * i, 3 * i + 1) = rate;
      g(3 * i + 1, 3 * i) = -rate;
    }
  }
  // -S^2 = [[R^2, -R G], [G R, R^2 - G^2]]
  const Matrix r2 = r * r;
  const Matrix rg = r * g;
  const Matrix gr = g * r;
  const Matrix g2 = g * g;
  Matrix m(2 * d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      m(a, b) = r2(a, b);
      m(a, d + b) = -rg(a, b);
      m(d + a, b) = gr(a, b);
      m(d + a, d + b) = r2(a, b) - g2(a, b);
    }
  }
  // Symmetrize away rounding from the products.
  for (std::size_t a = 0; a < 2 * d; ++a)
    for (std::size_t b = a + 1; b < 2 * d; ++b) m(a, b) = m(b, a) = 0.5 * (m(a, b) + m(b, a));
  const auto em = jacobi_eigen(m);
  std::vector<double> values;
  std::vector<std::vector<double>> vecs;
  for (std::size_t p = 0; p + 1 < 2 * d; p += 2) {
    values.push_back(0.5 * (em.values[p] + em.values[p + 1]));
    std::vector<double> pos(d), vel(d);
    double nv = 0.0, np = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      pos[a] = em.vectors(a, p);
      vel[a] = em.vectors(d + a, p);
      nv += vel[a] * vel[a];
      np += pos[a] * pos[a];
    }
    vecs.push_back(nv >= 1e-6 * np ? vel : pos);
  }
  return assemble(values, std::move(vecs));
}

std::vector<SoftModePoint> soft_mode_scan(int n, const IonSpecies& species, const LinearRfTrap& trap_template,
                                          std::span<const double> ratio_grid) {
  const double wz = axial_frequency(trap_template, species);
  const auto z = string_positions(n, species, wz);
  std::vector<Vec3> pos;
  for (double zi : z) pos.push_back({0.0, 0.0, zi});
  const SystemState string = make_state(pos);
  const SpeciesTable table{species};
  const double force_scale = kCoulomb * species.charge * species.charge / std::pow(string_length_scale(species, wz), 2);
  std::vector<SoftModePoint> out;
  for (double ratio : ratio_grid) {
    if (!(ratio > 0.0)) throw ConfigError("soft_mode_scan: ratios must be positive");
    LinearRfTrap t = trap_template;
    const double soft_scale = 1.0 - std::abs(t.radial_asymmetry);
    t.rf_amplitude = rf_amplitude_for(t, species, std::sqrt(ratio / soft_scale) * wz);
    const auto spec = transverse_spectrum(string, table, t, 1e-9 * force_scale);
    SoftModePoint p;
    p.ratio = ratio;
    p.lowest_frequency = spec.frequencies.front();
    p.linear = !spec.imaginary.front();
    out.push_back(p);
  }
  return out;
}

}  // namespace icc
