#include "icc/run.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "icc/constants.hpp"
#include "icc/diagnostics.hpp"
#include "icc/dynamics.hpp"
#include "icc/error.hpp"

namespace icc {
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

TrapConfig static_equivalent(const TrapConfig& trap) {
  TrapConfig t = trap;
  t.rf_mode = RfMode::pseudopotential;
  return t;
}

std::uint64_t seed_of(const ExperimentConfig& c) { return c.seed.value_or(0); }

const IonSpecies& reference_species(const ExperimentConfig& c) {
  if (c.species.empty()) throw ConfigError("no species configured");
  return c.species.front().species;
}

CsvTable positions_table(const std::vector<Vec3>& p, const std::vector<std::size_t>& idx, const SpeciesTable& sp) {
  CsvTable t({"ion[1]", "species[text]", "x[m]", "y[m]", "z[m]"});
  for (std::size_t i = 0; i < p.size(); ++i) {
    t.row().add(static_cast<long long>(i)).add(sp[idx[i]].name).add(p[i].x).add(p[i].y).add(p[i].z);
  }
  return t;
}

// Samples a trajectory every `interval` from `start` to `end`; `to_lab`
// maps the integrator frame into the lab frame.
template <class ToLab>
std::vector<TrajectorySample> sampled_md(SystemState s, const SpeciesTable& species, const TrapConfig& trap,
                                         const CoolingModel& cooling, double start, double end, double interval,
                                         Rng& rng, ToLab to_lab) {
  Integrator integ(species, trap, cooling);
  const double limit = 0.25 * max_timestep(s, species, trap);
  const auto sub = static_cast<std::size_t>(std::ceil(interval / limit - 1e-9));
  const double dt = interval / static_cast<double>(std::max<std::size_t>(sub, 1));
  std::vector<TrajectorySample> out;
  s.time = 0.0;
  const auto total = static_cast<std::size_t>(std::floor(end / interval + 1e-9));
  for (std::size_t k = 0; k <= total; ++k) {
    if (k > 0) {
      for (std::size_t j = 0; j < std::max<std::size_t>(sub, 1); ++j) integ.step(s, dt, rng);
    }
    if (s.time >= start - 1e-12 * interval) out.push_back({s.time, to_lab(s)});
  }
  return out;
}

void write_text(const fs::path& dir, const std::string& name, const std::string& data, RunManifest& m) {
  const fs::path p = dir / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string() + " for writing");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed for " + p.string());
  m.outputs.push_back({name, hex64(fnv1a64(data))});
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  for (const auto& h : header_) {
    if (!header_has_units(h)) throw ConfigError("table column '" + h + "' lacks a [unit] annotation");
  }
}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double v) {
  rows_.back().push_back(format_number(v));
  return *this;
}

CsvTable& CsvTable::add(long long v) {
  rows_.back().push_back(std::to_string(v));
  return *this;
}

CsvTable& CsvTable::add(std::string_view text) {
  rows_.back().emplace_back(text);
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t k = 0; k < header_.size(); ++k) out += (k ? "," : "") + header_[k];
  out += "\n";
  for (const auto& r : rows_) {
    for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + r[k];
    out += "\n";
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool header_has_units(std::string_view line) {
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t comma = line.find(',', start);
    const std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    const auto open = field.find('[');
    if (open == std::string_view::npos || open == 0 || field.back() != ']' || open + 2 >= field.size()) return false;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return true;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* toolkit_version() { return ICC_VERSION_STRING; }

std::string RunManifest::json() const {
  nlohmann::ordered_json j;
  j["toolkit"] = "iccsim";
  j["version"] = version;
  j["protocol"] = protocol;
  j["config_hash"] = config_hash;
  j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
  j["start_time"] = start_time;
  j["end_time"] = end_time;
  j["directory"] = directory;
  auto files = nlohmann::ordered_json::array();
  for (const auto& f : outputs) files.push_back({{"path", f.path}, {"fnv1a64", f.checksum}});
  j["outputs"] = files;
  j["status"] = exit_code == 0 ? "ok" : "error";
  j["exit_code"] = exit_code;
  if (exit_code != 0) j["error"] = {{"kind", error_kind}, {"message", error_message}};
  return j.dump(2) + "\n";
}

std::string resolve_output_directory(const OutputSpec& output) {
  fs::path dir(output.directory);
  if (const char* root = std::getenv(kOutputRootVariable); root && *root && dir.is_relative()) dir = fs::path(root) / dir;
  return dir.string();
}

EquilibriumResult relax_for(const ExperimentConfig& c) { return relax_for(c, c.trap); }

EquilibriumResult relax_for(const ExperimentConfig& c, const TrapConfig& trap_in) {
  const TrapConfig trap = static_equivalent(trap_in);
  const SpeciesTable species = c.species_table();
  const auto idx = c.ion_species();
  const StartKind start = c.relax.start.value_or(trap.is_penning() ? StartKind::cloud : StartKind::lattice);
  const std::uint64_t seed = seed_of(c);
  const SystemState s0 =
      start == StartKind::cloud ? cloud_start(idx, species, trap, seed) : axial_lattice_start(idx, species, trap, seed);
  MinimizerOptions mo;
  mo.force_tolerance = c.relax.force_tolerance;
  mo.anneal = c.relax.anneal;
  mo.restarts = c.relax.restarts;
  mo.seed = seed;
  return relax(s0, species, trap, mo);
}

ModeSpectrum spectrum_for(const ExperimentConfig& c, const EquilibriumResult& eq) { return spectrum_for(c, c.trap, eq); }

ModeSpectrum spectrum_for(const ExperimentConfig& c, const TrapConfig& trap_in, const EquilibriumResult& eq) {
  const TrapConfig trap = static_equivalent(trap_in);
  const SpeciesTable species = c.species_table();
  const double tol = std::max(c.relax.force_tolerance, kEquilibriumForceTolerance);
  if (trap.is_penning()) return rotating_frame_spectrum(eq.state(), species, trap.penning(), true, tol);
  return mode_spectrum(hessian(eq.state(), species, trap, tol));
}

TrapConfig scan_trap(const ExperimentConfig& c, double v) {
  TrapConfig trap = c.trap;
  const IonSpecies& ref = reference_species(c);
  switch (c.scan.parameter) {
    case ScanParameter::anisotropy: {
      auto& t = trap.linear();
      if (!(v > 0.0)) throw ConfigError("scan: anisotropy must be > 0");
      const double wz = axial_frequency(t, ref);
      const double mean = std::sqrt(v * wz * wz / (1.0 - std::abs(t.radial_asymmetry)));
      t.rf_amplitude = rf_amplitude_for(t, ref, mean);
      break;
    }
    case ScanParameter::radial_frequency:
      trap.linear().rf_amplitude = rf_amplitude_for(trap.linear(), ref, v);
      break;
    case ScanParameter::axial_frequency:
      if (trap.is_linear()) {
        trap.linear().axial_angular_frequency = v;
      } else {
        trap.penning().u0 = penning_u0_for(trap.penning(), ref, v);
      }
      break;
    case ScanParameter::normalized_axial_frequency: {
      auto& t = trap.penning();
      const double wc = ref.charge * t.magnetic_field / ref.mass;
      t.u0 = penning_u0_for(t, ref, v * wc);
      break;
    }
    case ScanParameter::rotation_frequency:
      trap.penning().rotation_angular_frequency = v;
      break;
  }
  validate_trap(trap, c.species_table());
  return trap;
}

std::vector<ScanRow> run_scan(const ExperimentConfig& c) {
  if (c.scan.values.empty()) throw ConfigError("scan: empty grid");
  const auto n = static_cast<std::ptrdiff_t>(c.scan.values.size());
  std::vector<ScanRow> rows(c.scan.values.size());
  std::vector<std::exception_ptr> errors(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      const double v = c.scan.values[k];
      ExperimentConfig point = c;
      point.trap = scan_trap(c, v);
      // The stream depends on the value, not the position in the grid, so
      // ascending and descending scans see identical starts.
      point.seed = splitmix64(seed_of(c) ^ std::bit_cast<std::uint64_t>(v));
      const auto eq = relax_for(point);
      ScanRow& row = rows[k];
      row.value = v;
      row.positions = eq.positions;
      row.label = classify_structure(eq.positions);
      row.energy = eq.energy.total;
      row.converged = eq.converged;
      row.lowest_frequency = kNaN;
      if (eq.converged) {
        try {
          const auto spec = spectrum_for(point, eq);
          row.lowest_frequency = spec.frequencies.empty() ? kNaN : spec.frequencies.front();
        } catch (const PhysicsError&) {
        }
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("fit_power_law: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] > 0.0 && y[k] > 0.0) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  }
  PowerLawFit f;
  f.points = lx.size();
  if (f.points < 2) {
    f.exponent = kNaN;
    f.prefactor = kNaN;
    f.r_squared = kNaN;
    return f;
  }
  const double n = static_cast<double>(f.points);
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  f.exponent = sxy / sxx;
  f.prefactor = std::exp(my - f.exponent * mx);
  f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

QuenchSweep run_quench_sweep(const ExperimentConfig& c) {
  const auto& p = c.quench;
  if (p.durations.empty()) throw ConfigError("quench: no durations");
  const SpeciesTable species = c.species_table();
  const IonSpecies& ref = reference_species(c);
  QuenchSchedule sched{p.control, p.start_value, p.end_value, p.durations.front(), p.shape};
  const TrapConfig start = quench_trap(c.trap, ref, sched, 0.0);
  ExperimentConfig linear = c;
  linear.relax.anneal = false;
  linear.relax.restarts = 0;
  linear.relax.start = StartKind::lattice;
  const auto eq = relax_for(linear, start);
  if (!eq.converged) throw PhysicsError("quench: the initial chain did not converge");
  const SystemState initial = eq.state();

  QuenchSweep out;
  out.durations = p.durations;
  const std::size_t total = p.durations.size() * p.seeds;
  out.runs.resize(total);
  std::vector<std::exception_ptr> errors(total);
  QuenchOptions qo;
  qo.dt = p.dt;
  qo.hold_factor = p.hold_factor;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(total); ++k) {
    try {
      const std::size_t d = static_cast<std::size_t>(k) / p.seeds;
      const std::size_t s = static_cast<std::size_t>(k) % p.seeds;
      QuenchSchedule sk = sched;
      sk.duration = p.durations[d];
      Rng rng = Rng::stream(seed_of(c), 1 + static_cast<std::uint64_t>(k));
      const auto r = run_quench(initial, species, c.trap, sk, c.cooling, rng, qo);
      QuenchRun& run = out.runs[k];
      run.duration = sk.duration;
      run.seed_index = s;
      run.defects = r.defects.defect_count;
      for (auto kind : r.defects.kinds) (kind == DefectKind::odd ? run.odd : run.extended) += 1;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t d = 0; d < p.durations.size(); ++d) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t s = 0; s < p.seeds; ++s) {
      const double v = static_cast<double>(out.runs[d * p.seeds + s].defects);
      sum += v;
      sum2 += v * v;
    }
    const double n = static_cast<double>(p.seeds);
    const double mean = sum / n;
    out.mean_defects.push_back(mean);
    const double var = n > 1 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)) : 0.0;
    out.standard_error.push_back(std::sqrt(var / n));
  }
  out.fit = fit_power_law(out.durations, out.mean_defects);
  return out;
}

std::vector<TrajectorySample> image_samples(const ExperimentConfig& c, const EquilibriumResult& eq) {
  const auto& p = c.image;
  const auto& cam = p.camera;
  const SpeciesTable species = c.species_table();
  const double end = cam.start_time + cam.exposure;
  double interval = p.sample_interval;
  if (!(interval > 0.0)) {
    interval = cam.blur_angular_frequency > 0.0 ? kTwoPi / cam.blur_angular_frequency / 40.0 : cam.exposure / 100.0;
  }
  Rng rng = Rng::stream(seed_of(c), 0x1a4e);
  SystemState s = eq.state();
  if (p.temperature > 0.0) thermalize_velocities(s, species, p.temperature, rng);

  if (c.trap.is_penning()) {
    const PenningTrap& t = c.trap.penning();
    auto to_lab = [&t](const SystemState& st) {
      std::vector<Vec3> lab(st.size());
      for (std::size_t i = 0; i < st.size(); ++i) lab[i] = rotating_to_lab(t, st.positions[i], st.time);
      return lab;
    };
    if (p.temperature > 0.0) {
      CoolingModel cool = c.cooling;
      cool.target_temperature = p.temperature;
      return sampled_md(s, species, c.trap, cool, cam.start_time, end, interval, rng, to_lab);
    }
    std::vector<TrajectorySample> out;
    const auto total = static_cast<std::size_t>(std::floor(end / interval + 1e-9));
    for (std::size_t k = 0; k <= total; ++k) {
      s.time = static_cast<double>(k) * interval;
      if (s.time >= cam.start_time - 1e-12 * interval) out.push_back({s.time, to_lab(s)});
    }
    return out;
  }
  auto identity = [](const SystemState& st) { return st.positions; };
  if (c.trap.rf_mode == RfMode::full_drive || p.temperature > 0.0) {
    CoolingModel cool = c.cooling;
    if (p.temperature > 0.0) cool.target_temperature = p.temperature;
    return sampled_md(s, species, c.trap, cool, cam.start_time, end, interval, rng, identity);
  }
  std::vector<TrajectorySample> out;
  const auto total = static_cast<std::size_t>(std::floor(end / interval + 1e-9));
  for (std::size_t k = 0; k <= total; ++k) {
    const double t = static_cast<double>(k) * interval;
    if (t >= cam.start_time - 1e-12 * interval) out.push_back({t, s.positions});
  }
  return out;
}

Image image_for(const ExperimentConfig& c) {
  const auto eq = relax_for(c);
  const auto samples = image_samples(c, eq);
  return render(samples, eq.species_index, c.species_table(), c.image.camera);
}

RunManifest run(const ExperimentConfig& c) {
  RunManifest m;
  m.version = toolkit_version();
  m.protocol = to_string(c.protocol);
  const std::string canonical = serialize(c);
  m.config_hash = hex64(fnv1a64(canonical));
  m.seed = c.seed;
  m.start_time = utc_now();
  const fs::path dir = resolve_output_directory(c.output);
  m.directory = dir.string();

  try {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir, "config.ini", canonical, m);
    const SpeciesTable species = c.species_table();

    switch (c.protocol) {
      case Protocol::relax:
      case Protocol::modes: {
        const auto eq = relax_for(c);
        write_text(dir, "equilibrium.csv", positions_table(eq.positions, eq.species_index, species).str(), m);
        CsvTable summary({"total_energy[J]", "trap_energy[J]", "coulomb_energy[J]", "max_residual_force[N]",
                          "converged[1]", "structure[text]"});
        summary.row()
            .add(eq.energy.total)
            .add(eq.energy.trap_energy)
            .add(eq.energy.coulomb_energy)
            .add(eq.gradient_norm)
            .add(static_cast<long long>(eq.converged))
            .add(to_string(classify_structure(eq.positions)));
        write_text(dir, "summary.csv", summary.str(), m);
        if (!eq.converged) throw PhysicsError("relaxation did not converge (residual force " + format_number(eq.gradient_norm) + " N)");
        if (c.protocol == Protocol::modes) {
          const auto spec = spectrum_for(c, eq);
          CsvTable t({"mode[1]", "frequency[Hz]", "angular_frequency[rad/s]", "squared_frequency[rad^2/s^2]",
                      "label[text]", "imaginary[1]"});
          for (std::size_t k = 0; k < spec.size(); ++k) {
            t.row()
                .add(static_cast<long long>(k))
                .add(to_hertz(spec.frequencies[k]))
                .add(spec.frequencies[k])
                .add(spec.squared_frequencies[k])
                .add(to_string(spec.labels[k]))
                .add(static_cast<long long>(spec.imaginary[k]));
          }
          write_text(dir, "modes.csv", t.str(), m);
        }
        break;
      }
      case Protocol::evolve: {
        SystemState s;
        if (c.evolve.from_equilibrium) {
          s = relax_for(c).state();
        } else {
          const StartKind start = c.relax.start.value_or(c.trap.is_penning() ? StartKind::cloud : StartKind::lattice);
          const auto idx = c.ion_species();
          s = start == StartKind::cloud ? cloud_start(idx, species, static_equivalent(c.trap), seed_of(c))
                                        : axial_lattice_start(idx, species, static_equivalent(c.trap), seed_of(c));
        }
        Rng rng = Rng::stream(seed_of(c), 1);
        if (c.evolve.initial_temperature > 0.0) thermalize_velocities(s, species, c.evolve.initial_temperature, rng);
        CsvTable t({"time[s]", "temperature[K]", "kinetic_energy[J]", "trap_energy[J]", "coulomb_energy[J]",
                    "total_energy[J]", "gamma[1]"});
        auto observer = [&](const Observation& o, const SystemState& st) {
          double gamma = kNaN;
          if (st.size() >= 4 && o.temperature > 0.0) {
            try {
              gamma = coupling_parameter(o.temperature, wigner_seitz(cloud_density(st.positions)));
            } catch (const std::exception&) {
            }
          }
          t.row().add(o.time).add(o.temperature).add(o.kinetic_energy).add(o.trap_energy).add(o.coulomb_energy)
              .add(o.total_energy).add(gamma);
        };
        EvolveOptions eo{c.evolve.duration, c.evolve.dt, c.evolve.sample_every};
        evolve(s, species, c.trap, c.cooling, eo, rng, observer);
        write_text(dir, "observables.csv", t.str(), m);
        CsvTable fin({"ion[1]", "species[text]", "x[m]", "y[m]", "z[m]", "vx[m/s]", "vy[m/s]", "vz[m/s]"});
        for (std::size_t i = 0; i < s.size(); ++i) {
          const auto& r = s.positions[i];
          const auto& v = s.velocities[i];
          fin.row().add(static_cast<long long>(i)).add(species[s.species_index[i]].name).add(r.x).add(r.y).add(r.z)
              .add(v.x).add(v.y).add(v.z);
        }
        write_text(dir, "final_state.csv", fin.str(), m);
        break;
      }
      case Protocol::quench: {
        const auto sweep = run_quench_sweep(c);
        CsvTable runs({"duration[s]", "seed_index[1]", "defects[1]", "odd[1]", "extended[1]"});
        for (const auto& r : sweep.runs) {
          runs.row().add(r.duration).add(static_cast<long long>(r.seed_index)).add(static_cast<long long>(r.defects))
              .add(static_cast<long long>(r.odd)).add(static_cast<long long>(r.extended));
        }
        write_text(dir, "quench_runs.csv", runs.str(), m);
        CsvTable summary({"duration[s]", "mean_defects[1]", "standard_error[1]"});
        for (std::size_t d = 0; d < sweep.durations.size(); ++d) {
          summary.row().add(sweep.durations[d]).add(sweep.mean_defects[d]).add(sweep.standard_error[d]);
        }
        write_text(dir, "quench_summary.csv", summary.str(), m);
        CsvTable fit({"exponent[1]", "prefactor[1]", "r_squared[1]", "points[1]"});
        fit.row().add(sweep.fit.exponent).add(sweep.fit.prefactor).add(sweep.fit.r_squared)
            .add(static_cast<long long>(sweep.fit.points));
        write_text(dir, "quench_fit.csv", fit.str(), m);
        break;
      }
      case Protocol::scan: {
        const auto rows = run_scan(c);
        const bool dimensionless = c.scan.parameter == ScanParameter::anisotropy ||
                                   c.scan.parameter == ScanParameter::normalized_axial_frequency;
        const std::string name = to_string(c.scan.parameter);
        CsvTable t({name + (dimensionless ? "[1]" : "[Hz]"), "structure[text]", "energy[J]", "lowest_frequency[Hz]",
                    "converged[1]"});
        for (const auto& r : rows) {
          t.row().add(dimensionless ? r.value : to_hertz(r.value)).add(to_string(r.label)).add(r.energy)
              .add(to_hertz(r.lowest_frequency)).add(static_cast<long long>(r.converged));
        }
        write_text(dir, "scan.csv", t.str(), m);
        break;
      }
      case Protocol::image: {
        const Image img = image_for(c);
        write_text(dir, "image.pgm", to_pgm(img, c.output.pgm_binary), m);
        break;
      }
    }
  } catch (const ConfigError& e) {
    m.exit_code = 1;
    m.error_kind = "config";
    m.error_message = e.what();
  } catch (const PhysicsError& e) {
    m.exit_code = 2;
    m.error_kind = "physics";
    m.error_message = e.what();
  } catch (const IoError& e) {
    m.exit_code = 3;
    m.error_kind = "io";
    m.error_message = e.what();
  }
  m.end_time = utc_now();
  if (m.exit_code != 3) {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (f) f << m.json();
    if (!f) {
      m.exit_code = 3;
      m.error_kind = "io";
      m.error_message = "cannot write manifest.json in " + dir.string();
    }
  }
  return m;
}

}  // namespace icc
