#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icc/constants.hpp"
#include "icc/dynamics.hpp"
#include "icc/species.hpp"
#include "icc/vec3.hpp"

namespace icc {

enum class ViewAxis { x, y, z };
enum class GateReference { rf, rotation };

// Phase-locked gate: a sample is accepted when the reference phase
// w t - phase_offset lies within +-phase_window/2 of 0 (mod 2 pi).
struct CameraGate {
  bool enabled = false;
  double phase_window = kTwoPi;  // rad, in (0, 2 pi]
  GateReference reference = GateReference::rotation;
  double reference_angular_frequency = 0.0;  // rad/s
  double phase_offset = 0.0;                 // rad
};

struct CameraModel {
  double pixel_pitch = 2.65e-6;  // m per pixel in the object plane
  int width = 128;
  int height = 128;
  double psf_sigma = 2e-6;       // m
  double start_time = 0.0;       // s
  double exposure = 0.0;         // s, samples in [start, start + exposure] count
  CameraGate gate;
  // View along z images (x, y); along y images (z, x); along x images (z, y).
  ViewAxis view_axis = ViewAxis::z;
  Vec3 center{};  // object point imaged onto the middle of the sensor
  // Fastest motion to be blurred (RF or rotation); when ungated the samples
  // must resolve it with >= 20 per period. 0 skips the check.
  double blur_angular_frequency = 0.0;
  // Optional end-of-string falloff: brightness scaled by this beam's weight.
  std::optional<CoolingModel> illumination;
};

void validate_camera(const CameraModel& camera);

struct TrajectorySample {
  double time = 0.0;  // s
  std::vector<Vec3> positions;  // lab frame
};

// Pre-normalization accumulator, row-major, row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;
  double at(int col, int row) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double total() const;
};

// Image-plane coordinates (u right, v up) of a lab-frame point.
std::pair<double, double> project(const Vec3& r, ViewAxis axis);
// Continuous pixel coordinates (column, row) of a lab-frame point; pixel
// centres sit at integer values.
std::pair<double, double> pixel_coordinates(const CameraModel& camera, const Vec3& r);

bool gate_accepts(const CameraGate& gate, double time);

// Each fluorescent ion deposits a pixel-integrated Gaussian per accepted
// sample. Throws ConfigError for an undersampled ungated exposure and
// PhysicsError when no sample is accepted.
Image render(std::span<const TrajectorySample> samples, const std::vector<std::size_t>& species_index,
             const SpeciesTable& species, const CameraModel& camera);

// Ungated time-integrated image of a full-drive trajectory; micromotion
// turns off-axis ions into streaks. `rf_angular_frequency` sets the
// sampling check.
Image rf_image_streaks(std::span<const TrajectorySample> samples, const std::vector<std::size_t>& species_index,
                       const SpeciesTable& species, CameraModel camera, double rf_angular_frequency);

// Per-image max scaling to 0..65535 (all zero for a blank image).
std::vector<std::uint16_t> normalize_16bit(const Image& image);

// Portable graymap, maxval 65535. Binary (P5) pixels are big-endian.
std::string to_pgm(const Image& image, bool binary);
void write_pgm(const std::string& path, const Image& image, bool binary);

}  // namespace icc
