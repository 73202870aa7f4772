#include "icc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "icc/error.hpp"

namespace icc {
namespace {

constexpr double kMinSamplesPerPeriod = 20.0;
constexpr double kPsfReach = 5.0;  // sigmas

// Fraction of a unit Gaussian (centre c, width s) falling in [lo, hi].
inline double gauss_mass(double lo, double hi, double c, double s) {
  const double k = 1.0 / (std::sqrt(2.0) * s);
  return 0.5 * (std::erf((hi - c) * k) - std::erf((lo - c) * k));
}

}  // namespace

double Image::total() const { return std::accumulate(pixels.begin(), pixels.end(), 0.0); }

void validate_camera(const CameraModel& c) {
  if (!(c.pixel_pitch > 0.0)) throw ConfigError("camera: pixel pitch must be > 0");
  if (!(c.psf_sigma > 0.0)) throw ConfigError("camera: psf sigma must be > 0");
  if (!(c.exposure > 0.0)) throw ConfigError("camera: exposure must be > 0");
  if (c.width < 1 || c.height < 1) throw ConfigError("camera: image size must be positive");
  if (c.gate.enabled) {
    if (!(c.gate.phase_window > 0.0 && c.gate.phase_window <= kTwoPi)) {
      throw ConfigError("camera: gate phase window must lie in (0, 2 pi]");
    }
    if (!(c.gate.reference_angular_frequency > 0.0)) throw ConfigError("camera: gate reference frequency must be > 0");
  }
}

std::pair<double, double> project(const Vec3& r, ViewAxis axis) {
  switch (axis) {
    case ViewAxis::z:
      return {r.x, r.y};
    case ViewAxis::y:
      return {r.z, r.x};
    case ViewAxis::x:
      return {r.z, r.y};
  }
  return {r.x, r.y};
}

std::pair<double, double> pixel_coordinates(const CameraModel& c, const Vec3& r) {
  const auto [u, v] = project(r - c.center, c.view_axis);
  return {u / c.pixel_pitch + 0.5 * (c.width - 1), 0.5 * (c.height - 1) - v / c.pixel_pitch};
}

bool gate_accepts(const CameraGate& gate, double time) {
  if (!gate.enabled) return true;
  const double phase = std::remainder(gate.reference_angular_frequency * time - gate.phase_offset, kTwoPi);
  return std::abs(phase) <= 0.5 * gate.phase_window;
}

Image render(std::span<const TrajectorySample> samples, const std::vector<std::size_t>& species_index,
             const SpeciesTable& species, const CameraModel& cam) {
  validate_camera(cam);
  for (auto s : species_index) {
    if (s >= species.size()) throw ConfigError("render: species index out of range");
  }
  std::vector<const TrajectorySample*> accepted;
  for (const auto& s : samples) {
    if (s.positions.size() != species_index.size()) throw ConfigError("render: sample ion count mismatch");
    if (s.time < cam.start_time || s.time > cam.start_time + cam.exposure) continue;
    if (gate_accepts(cam.gate, s.time)) accepted.push_back(&s);
  }
  if (accepted.empty()) {
    throw PhysicsError("render: no trajectory sample accepted (gate too narrow for the sampling, or exposure empty)");
  }
  if (!cam.gate.enabled && cam.blur_angular_frequency > 0.0 && accepted.size() > 1) {
    const double period = kTwoPi / cam.blur_angular_frequency;
    double widest = 0.0;
    for (std::size_t k = 1; k < accepted.size(); ++k) widest = std::max(widest, accepted[k]->time - accepted[k - 1]->time);
    if (widest > period / kMinSamplesPerPeriod * (1.0 + 1e-9)) {
      throw ConfigError("render: sampling interval too coarse for blur, need >= 20 samples per period");
    }
  }

  Image img{cam.width, cam.height, std::vector<double>(static_cast<std::size_t>(cam.width) * cam.height, 0.0)};
  const double reach = kPsfReach * cam.psf_sigma / cam.pixel_pitch;
  const double sig = cam.psf_sigma / cam.pixel_pitch;  // in pixels
  std::vector<double> wu, wv;
  for (const auto* s : accepted) {
    for (std::size_t i = 0; i < species_index.size(); ++i) {
      if (!species[species_index[i]].fluorescent) continue;
      const Vec3& r = s->positions[i];
      const double brightness = cam.illumination ? cam.illumination->beam_weight(r) : 1.0;
      const auto [pc, pr] = pixel_coordinates(cam, r);
      const int c0 = std::max(0, static_cast<int>(std::floor(pc - reach)));
      const int c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(pc + reach)));
      const int r0 = std::max(0, static_cast<int>(std::floor(pr - reach)));
      const int r1 = std::min(cam.height - 1, static_cast<int>(std::ceil(pr + reach)));
      if (c0 > c1 || r0 > r1) continue;
      wu.resize(c1 - c0 + 1);
      wv.resize(r1 - r0 + 1);
      for (int c = c0; c <= c1; ++c) wu[c - c0] = gauss_mass(c - 0.5, c + 0.5, pc, sig);
      for (int rr = r0; rr <= r1; ++rr) wv[rr - r0] = gauss_mass(rr - 0.5, rr + 0.5, pr, sig);
      for (int rr = r0; rr <= r1; ++rr) {
        double* row = img.pixels.data() + static_cast<std::size_t>(rr) * cam.width;
        for (int c = c0; c <= c1; ++c) row[c] += brightness * wu[c - c0] * wv[rr - r0];
      }
    }
  }
  return img;
}

Image rf_image_streaks(std::span<const TrajectorySample> samples, const std::vector<std::size_t>& species_index,
                       const SpeciesTable& species, CameraModel camera, double rf_angular_frequency) {
  if (!(rf_angular_frequency > 0.0)) throw ConfigError("rf_image_streaks: RF frequency must be > 0");
  camera.gate.enabled = false;
  camera.blur_angular_frequency = rf_angular_frequency;
  return render(samples, species_index, species, camera);
}

std::vector<std::uint16_t> normalize_16bit(const Image& image) {
  std::vector<std::uint16_t> out(image.pixels.size(), 0);
  const double peak = image.pixels.empty() ? 0.0 : *std::max_element(image.pixels.begin(), image.pixels.end());
  if (!(peak > 0.0)) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double v = std::clamp(image.pixels[k] / peak, 0.0, 1.0);
    out[k] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  return out;
}

std::string to_pgm(const Image& image, bool binary) {
  const auto px = normalize_16bit(image);
  std::string out = (binary ? "P5\n" : "P2\n") + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n65535\n";
  if (binary) {
    out.reserve(out.size() + 2 * px.size());
    for (auto v : px) {
      out.push_back(static_cast<char>(v >> 8));
      out.push_back(static_cast<char>(v & 0xff));
    }
    return out;
  }
  // Plain format: one image row per line is allowed as long as lines stay
  // short, so wrap at 70 characters.
  for (int r = 0; r < image.height; ++r) {
    std::size_t line = 0;
    for (int c = 0; c < image.width; ++c) {
      const std::string tok = std::to_string(px[static_cast<std::size_t>(r) * image.width + c]);
      if (line > 0 && line + 1 + tok.size() > 70) {
        out.push_back('\n');
        line = 0;
      }
      if (line > 0) {
        out.push_back(' ');
        ++line;
      }
      out += tok;
      line += tok.size();
    }
    out.push_back('\n');
  }
  return out;
}

void write_pgm(const std::string& path, const Image& image, bool binary) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::string data = to_pgm(image, binary);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace icc
