#pragma once

#include <span>
#include <vector>

#include "icc/linalg.hpp"
#include "icc/state.hpp"
#include "icc/trap.hpp"

namespace icc {

enum class ModeLabel { axial, transverse, mixed };

const char* to_string(ModeLabel label);

struct ModeSpectrum {
  // Eigenvalues of the mass-weighted Hessian (rad^2/s^2), ascending. A
  // negative entry is an unstable direction (saddle) and is kept as is.
  std::vector<double> squared_frequencies;
  // sqrt(|w^2|) in rad/s; `imaginary[k]` marks entries from negative w^2.
  std::vector<double> frequencies;
  std::vector<bool> imaginary;
  // Unit displacement pattern per mode, 3N components, ion-major.
  std::vector<std::vector<double>> eigenvectors;
  std::vector<ModeLabel> labels;

  std::size_t size() const { return frequencies.size(); }
  bool has_imaginary() const;
  // Frequencies of modes carrying `label`, ascending.
  std::vector<double> frequencies_with(ModeLabel label) const;
};

// Largest per-ion residual force the Hessian accepts as "at equilibrium".
inline constexpr double kEquilibriumForceTolerance = 1e-19;  // N

// Largest per-ion residual force of `state` in the static confinement.
double max_residual_force(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap);

// Mass-weighted Hessian H_ij / sqrt(m_i m_j) in rad^2/s^2. Throws
// PhysicsError with the residual force when the state is not an equilibrium.
Matrix hessian(const SystemState& state, const SpeciesTable& species, const TrapConfig& trap,
               double force_tolerance = kEquilibriumForceTolerance);

// Diagonalizes a mass-weighted Hessian; labels each mode by where 90% of
// its squared norm lies (z: axial, x/y: transverse, else mixed). Degenerate
// frequencies are ordered by the index of the largest eigenvector component.
ModeSpectrum mode_spectrum(const Matrix& mass_weighted_hessian);

// Transverse (x/y) block of a linear string only. The centre-of-mass mode
// sits at the top, the zigzag mode at the bottom.
ModeSpectrum transverse_spectrum(const SystemState& string, const SpeciesTable& species, const LinearRfTrap& trap,
                                 double force_tolerance = kEquilibriumForceTolerance);

// Rotating-frame Penning spectrum including the velocity-dependent force
// m (wc - 2 wr) v x z_hat. The first-order system [q; v]' = [[0, I], [-K, G]]
// is similar to the real antisymmetric matrix S = [[0, R], [-R, G]] with
// R = K^(1/2) (K mass-weighted, positive semidefinite), so mode frequencies
// are the square roots of the eigenvalues of -S^2, each appearing twice.
// With include_gyro = false this reduces to the plain Hessian spectrum.
// Throws PhysicsError if K has a negative eigenvalue (not a minimum).
ModeSpectrum rotating_frame_spectrum(const SystemState& state, const SpeciesTable& species, const PenningTrap& trap,
                                     bool include_gyro = true, double force_tolerance = kEquilibriumForceTolerance);

struct SoftModePoint {
  double ratio = 0.0;             // wx^2 / wz^2
  double lowest_frequency = 0.0;  // rad/s, lowest transverse mode of the string
  bool linear = true;             // false once the string is past the transition
};

// Lowest transverse frequency of an N-ion string on each grid point, for a
// template trap whose radial frequency is reset to sqrt(ratio) wz. Points
// where the string is unstable are flagged linear = false.
std::vector<SoftModePoint> soft_mode_scan(int n, const IonSpecies& species, const LinearRfTrap& trap_template,
                                          std::span<const double> ratio_grid);

}  // namespace icc
