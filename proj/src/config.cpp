#include "icc/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "icc/constants.hpp"
#include "icc/error.hpp"

namespace icc {
namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct UnitRow {
  const char* name;
  double factor;
};

const std::vector<UnitRow>& units_for(Dimension d) {
  static const std::vector<UnitRow> none{};
  static const std::vector<UnitRow> frequency{
      {"Hz", kTwoPi}, {"kHz", kTwoPi * 1e3}, {"MHz", kTwoPi * 1e6}, {"GHz", kTwoPi * 1e9}, {"rad/s", 1.0}};
  static const std::vector<UnitRow> length{
      {"m", 1.0}, {"cm", 1e-2}, {"mm", 1e-3}, {"um", 1e-6}, {"\xC2\xB5m", 1e-6}, {"nm", 1e-9}};
  static const std::vector<UnitRow> voltage{{"V", 1.0}, {"mV", 1e-3}, {"kV", 1e3}};
  static const std::vector<UnitRow> field{{"T", 1.0}, {"mT", 1e-3}, {"G", 1e-4}};
  static const std::vector<UnitRow> temperature{
      {"K", 1.0}, {"mK", 1e-3}, {"uK", 1e-6}, {"\xC2\xB5K", 1e-6}, {"nK", 1e-9}};
  static const std::vector<UnitRow> time{
      {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"\xC2\xB5s", 1e-6}, {"ns", 1e-9}};
  static const std::vector<UnitRow> rate{{"1/s", 1.0}, {"/s", 1.0}, {"s^-1", 1.0}, {"1/ms", 1e3}, {"1/us", 1e6}};
  static const std::vector<UnitRow> mass{{"u", PhysicalConstants::atomic_mass_unit},
                                         {"amu", PhysicalConstants::atomic_mass_unit},
                                         {"kg", 1.0}};
  static const std::vector<UnitRow> gradient{{"V/m^2", 1.0}, {"V/cm^2", 1e4}, {"V/mm^2", 1e6}};
  static const std::vector<UnitRow> efield{{"V/m", 1.0}, {"mV/m", 1e-3}, {"V/cm", 1e2}, {"V/mm", 1e3}};
  static const std::vector<UnitRow> heating{{"K/s", 1.0}, {"mK/s", 1e-3}, {"uK/s", 1e-6}, {"mK/ms", 1.0}};
  static const std::vector<UnitRow> angle{{"rad", 1.0}, {"mrad", 1e-3}, {"deg", kPi / 180.0}};
  static const std::vector<UnitRow> force{{"N", 1.0}};
  switch (d) {
    case Dimension::none:
      return none;
    case Dimension::frequency:
      return frequency;
    case Dimension::length:
      return length;
    case Dimension::voltage:
      return voltage;
    case Dimension::magnetic_field:
      return field;
    case Dimension::temperature:
      return temperature;
    case Dimension::time:
      return time;
    case Dimension::rate:
      return rate;
    case Dimension::mass:
      return mass;
    case Dimension::field_gradient:
      return gradient;
    case Dimension::electric_field:
      return efield;
    case Dimension::heating_rate:
      return heating;
    case Dimension::angle:
      return angle;
    case Dimension::force:
      return force;
  }
  return none;
}

const char* dimension_name(Dimension d) {
  switch (d) {
    case Dimension::none:
      return "dimensionless";
    case Dimension::frequency:
      return "frequency";
    case Dimension::length:
      return "length";
    case Dimension::voltage:
      return "voltage";
    case Dimension::magnetic_field:
      return "magnetic field";
    case Dimension::temperature:
      return "temperature";
    case Dimension::time:
      return "time";
    case Dimension::rate:
      return "rate";
    case Dimension::mass:
      return "mass";
    case Dimension::field_gradient:
      return "field gradient";
    case Dimension::electric_field:
      return "electric field";
    case Dimension::heating_rate:
      return "heating rate";
    case Dimension::angle:
      return "angle";
    case Dimension::force:
      return "force";
  }
  return "dimensionless";
}

// Splits "1.5e3 kHz" into the number and the unit text.
std::pair<double, std::string> split_number(std::string_view text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError("empty value");
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || !std::isfinite(v)) throw ConfigError("'" + t + "' is not a number");
  return {v, trim(std::string_view(res.ptr, static_cast<std::size_t>(last - res.ptr)))};
}

double unit_factor(const std::string& unit, Dimension d) {
  const auto& rows = units_for(d);
  if (unit.empty()) {
    if (d == Dimension::none) return 1.0;
    throw ConfigError(std::string("missing unit for a ") + dimension_name(d) + " value");
  }
  for (const auto& r : rows) {
    if (unit == r.name) return r.factor;
  }
  std::string allowed;
  for (const auto& r : rows) allowed += std::string(allowed.empty() ? "" : ", ") + r.name;
  throw ConfigError("unit '" + unit + "' is not a " + dimension_name(d) + " unit" +
                    (allowed.empty() ? std::string(" (value is dimensionless)") : " (use " + allowed + ")"));
}

bool parse_bool(const std::string& v) {
  const std::string s = lower(trim(v));
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

std::uint64_t parse_uint(const std::string& v) {
  const std::string s = trim(v);
  std::uint64_t out = 0;
  int base = 10;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    first += 2;
  }
  const auto res = std::from_chars(first, last, out, base);
  if (res.ec != std::errc() || res.ptr != last || s.empty()) throw ConfigError("'" + s + "' is not a non-negative integer");
  return out;
}

// Consumes the entries of one section, tracking which keys were used.
class SectionReader {
 public:
  SectionReader(const RawSection& section) : name_(section.first), entries_(section.second) {}

  const RawEntry* find(const std::string& key) {
    const RawEntry* hit = nullptr;
    for (const auto& e : entries_) {
      if (e.key == key) hit = &e;
    }
    if (hit) used_.insert(key);
    return hit;
  }
  bool has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const RawEntry& e) { return e.key == key; });
  }

  template <class F>
  auto with(const RawEntry* e, F&& f) -> decltype(f(std::string())) {
    try {
      return f(e->value);
    } catch (const ConfigError& err) {
      throw ConfigError(context(*e) + err.what());
    } catch (const PhysicsError& err) {
      throw ConfigError(context(*e) + err.what());
    }
  }

  std::optional<double> quantity(const std::string& key, Dimension d) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    return with(e, [&](const std::string& v) { return parse_quantity(v, d); });
  }
  double require_quantity(const std::string& key, Dimension d) {
    auto v = quantity(key, d);
    if (!v) throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
    return *v;
  }
  std::optional<std::vector<double>> list(const std::string& key, Dimension d) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    return with(e, [&](const std::string& v) { return parse_quantity_list(v, d); });
  }
  std::optional<bool> boolean(const std::string& key) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    return with(e, [](const std::string& v) { return parse_bool(v); });
  }
  std::optional<std::uint64_t> integer(const std::string& key) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    return with(e, [](const std::string& v) { return parse_uint(v); });
  }
  std::optional<std::string> text(const std::string& key) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    return trim(e->value);
  }
  template <class T>
  std::optional<T> choice(const std::string& key, const std::vector<std::pair<std::string, T>>& options) {
    const RawEntry* e = find(key);
    if (!e) return std::nullopt;
    const std::string v = lower(trim(e->value));
    for (const auto& [name, value] : options) {
      if (v == name) return value;
    }
    std::string allowed;
    for (const auto& o : options) allowed += (allowed.empty() ? "" : ", ") + o.first;
    throw ConfigError(context(*e) + "'" + e->value + "' is not one of: " + allowed);
  }

  std::string context(const RawEntry& e) const {
    const std::string where = e.line > 0 ? "line " + std::to_string(e.line) : std::string("override");
    return where + ", [" + name_ + "] " + e.key + ": ";
  }
  std::string context(const std::string& key) const {
    for (const auto& e : entries_) {
      if (e.key == key) return context(e);
    }
    return "[" + name_ + "] " + key + ": ";
  }

  // Every key must have been read.
  void finish() const {
    for (const auto& e : entries_) {
      if (!used_.count(e.key)) throw ConfigError(context(e) + "unknown key");
    }
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  const std::vector<RawEntry>& entries_;
  std::set<std::string> used_;
};

const std::vector<std::pair<std::string, Protocol>> kProtocols{
    {"relax", Protocol::relax}, {"modes", Protocol::modes}, {"evolve", Protocol::evolve},
    {"quench", Protocol::quench}, {"scan", Protocol::scan},   {"image", Protocol::image}};

const std::vector<std::pair<std::string, ScanParameter>> kScanParameters{
    {"anisotropy", ScanParameter::anisotropy},
    {"radial_frequency", ScanParameter::radial_frequency},
    {"axial_frequency", ScanParameter::axial_frequency},
    {"normalized_axial_frequency", ScanParameter::normalized_axial_frequency},
    {"rotation_frequency", ScanParameter::rotation_frequency}};

Dimension scan_dimension(ScanParameter p) {
  switch (p) {
    case ScanParameter::anisotropy:
    case ScanParameter::normalized_axial_frequency:
      return Dimension::none;
    default:
      return Dimension::frequency;
  }
}

void parse_species(SectionReader& r, const std::string& label, ExperimentConfig& cfg) {
  SpeciesEntry entry;
  const auto catalog = r.text("catalog");
  const auto mass = r.quantity("mass", Dimension::mass);
  const auto charge = r.integer("charge");
  double m = 0.0;
  int z = 1;
  if (catalog || !mass) {
    IonSpecies base;
    try {
      base = species_from_catalog(catalog ? *catalog : label);
    } catch (const ConfigError& e) {
      throw ConfigError("[" + r.name() + "] " + (catalog ? "" : "needs 'mass' or 'catalog': ") + e.what());
    }
    m = base.mass;
    z = static_cast<int>(std::lround(base.charge_number()));
  }
  if (mass) m = *mass;
  if (charge) z = static_cast<int>(*charge);
  try {
    entry.species = make_species(label, m, z);
  } catch (const ConfigError& e) {
    throw ConfigError("[" + r.name() + "] " + e.what());
  }
  if (auto f = r.boolean("fluorescent")) entry.species.fluorescent = *f;
  if (auto c = r.boolean("cooled")) entry.species.cooled = *c;
  const auto count = r.integer("count");
  if (!count || *count == 0) throw ConfigError("[" + r.name() + "] needs 'count' >= 1");
  entry.count = static_cast<std::size_t>(*count);
  r.finish();
  for (const auto& s : cfg.species) {
    if (s.species.name == label) throw ConfigError("[" + r.name() + "] duplicate species section");
  }
  cfg.species.push_back(entry);
}

void parse_trap(SectionReader& r, ExperimentConfig& cfg) {
  if (cfg.species.empty()) throw ConfigError("at least one [species:<name>] section is required");
  const IonSpecies& ref = cfg.species.front().species;
  const auto type = r.choice<int>("type", {{"linear_rf", 0}, {"penning", 1}});
  if (!type) throw ConfigError("[trap] missing required key 'type'");
  if (*type == 0) {
    LinearRfTrap t;
    t.r0 = r.require_quantity("r0", Dimension::length);
    t.rf_angular_frequency = r.require_quantity("rf_frequency", Dimension::frequency);
    t.axial_angular_frequency = r.require_quantity("axial_frequency", Dimension::frequency);
    t.axial_reference_mass = ref.mass;
    t.axial_reference_charge = ref.charge;
    const double asym_default = cfg.protocol == Protocol::quench ? 0.01 : 0.0;
    t.radial_asymmetry = r.quantity("radial_asymmetry", Dimension::none).value_or(asym_default);
    if (auto f = r.list("stray_field", Dimension::electric_field)) {
      if (f->size() != 3) throw ConfigError(r.context("stray_field") + "needs three components");
      t.stray_field = {(*f)[0], (*f)[1], (*f)[2]};
    }
    const bool has_v = r.has("rf_amplitude");
    const bool has_w = r.has("radial_frequency");
    if (has_v == has_w) throw ConfigError("[trap] give exactly one of 'rf_amplitude' or 'radial_frequency'");
    std::string key = has_v ? "rf_amplitude" : "radial_frequency";
    if (has_v) {
      t.rf_amplitude = r.require_quantity("rf_amplitude", Dimension::voltage);
    } else {
      const double w = r.require_quantity("radial_frequency", Dimension::frequency);
      if (!(t.r0 > 0.0 && t.rf_angular_frequency > 0.0)) throw ConfigError(r.context(key) + "r0 and rf_frequency must be > 0");
      t.rf_amplitude = rf_amplitude_for(t, ref, w);
    }
    const auto mode = r.choice<RfMode>("rf_mode", {{"pseudopotential", RfMode::pseudopotential},
                                                   {"full_drive", RfMode::full_drive}});
    cfg.trap = TrapConfig{t, mode.value_or(RfMode::pseudopotential)};
    for (const auto& e : cfg.species) {
      const double q = mathieu_q(t, e.species);
      if (!(q < kMathieuHardLimit)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "Mathieu q = 4 e V / (m Omega^2 r0^2) = %.4g for %s exceeds the stability guard %.2g",
                      q, e.species.name.c_str(), kMathieuHardLimit);
        throw ConfigError(r.context(key) + buf);
      }
    }
  } else {
    PenningTrap t;
    t.r0 = r.require_quantity("r0", Dimension::length);
    t.z0 = r.require_quantity("z0", Dimension::length);
    t.magnetic_field = r.require_quantity("magnetic_field", Dimension::magnetic_field);
    t.rotation_angular_frequency = r.require_quantity("rotation_frequency", Dimension::frequency);
    t.wall_strength = r.quantity("wall_strength", Dimension::field_gradient).value_or(0.0);
    const bool has_u = r.has("u0");
    const bool has_w = r.has("axial_frequency");
    if (has_u == has_w) throw ConfigError("[trap] give exactly one of 'u0' or 'axial_frequency'");
    if (has_u) {
      t.u0 = r.require_quantity("u0", Dimension::voltage);
    } else {
      const double w = r.require_quantity("axial_frequency", Dimension::frequency);
      t.u0 = r.with(r.find("axial_frequency"), [&](const std::string&) { return penning_u0_for(t, ref, w); });
    }
    if (r.has("rf_mode")) {
      const auto mode = r.choice<RfMode>("rf_mode", {{"pseudopotential", RfMode::pseudopotential},
                                                     {"full_drive", RfMode::full_drive}});
      if (mode == RfMode::full_drive) throw ConfigError(r.context("rf_mode") + "a Penning trap has no RF drive");
    }
    cfg.trap = TrapConfig{t, RfMode::pseudopotential};
  }
  r.finish();
  try {
    validate_trap(cfg.trap, cfg.species_table());
  } catch (const PhysicsError& e) {
    throw ConfigError(std::string("[trap] ") + e.what());
  }
}

void parse_cooling(SectionReader& r, CoolingModel& c) {
  if (auto v = r.quantity("friction_rate", Dimension::rate)) c.friction_rate = *v;
  if (auto v = r.quantity("target_temperature", Dimension::temperature)) c.target_temperature = *v;
  if (auto v = r.choice<BeamGeometry>("beam", {{"uniform", BeamGeometry::uniform},
                                                {"axial", BeamGeometry::axial},
                                                {"radial_offset", BeamGeometry::radial_offset}})) {
    c.beam = *v;
  }
  if (auto v = r.quantity("beam_offset", Dimension::length)) c.beam_offset = *v;
  if (auto v = r.quantity("beam_waist", Dimension::length)) c.beam_waist = *v;
  if (auto v = r.quantity("extra_heating_rate", Dimension::heating_rate)) c.extra_heating_rate = *v;
  r.finish();
  try {
    validate_cooling(c);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("[cooling] ") + e.what());
  }
}

void parse_relax_keys(SectionReader& r, RelaxParams& p) {
  if (auto v = r.boolean("anneal")) p.anneal = *v;
  if (auto v = r.integer("restarts")) p.restarts = static_cast<int>(*v);
  if (auto v = r.choice<StartKind>("start", {{"lattice", StartKind::lattice}, {"cloud", StartKind::cloud}})) p.start = *v;
  if (auto v = r.quantity("force_tolerance", Dimension::force)) {
    if (!(*v > 0.0)) throw ConfigError(r.context("force_tolerance") + "must be > 0");
    p.force_tolerance = *v;
  }
}

std::vector<double> grid_from(SectionReader& r, const std::string& key, Dimension d, bool geometric) {
  const auto v = r.list(key, d);
  if (!v) return {};
  if (v->size() != 3) throw ConfigError(r.context(key) + "expects start, stop, points");
  const double a = (*v)[0];
  const double b = (*v)[1];
  const double pts = (*v)[2];
  if (!(pts >= 1.0) || pts != std::floor(pts)) throw ConfigError(r.context(key) + "points must be a positive integer");
  const auto n = static_cast<std::size_t>(pts);
  if (geometric && !(a > 0.0 && b > 0.0)) throw ConfigError(r.context(key) + "geometric grid needs positive ends");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
    out[k] = geometric ? a * std::pow(b / a, u) : a + (b - a) * u;
  }
  if (n > 1) {
    out.back() = b;
  }
  return out;
}

void parse_protocol(SectionReader& r, ExperimentConfig& cfg) {
  switch (cfg.protocol) {
    case Protocol::relax:
    case Protocol::modes:
      parse_relax_keys(r, cfg.relax);
      break;
    case Protocol::evolve: {
      parse_relax_keys(r, cfg.relax);
      auto& p = cfg.evolve;
      p.duration = r.require_quantity("duration", Dimension::time);
      if (!(p.duration >= 0.0)) throw ConfigError(r.context("duration") + "must be >= 0");
      if (auto v = r.quantity("dt", Dimension::time)) p.dt = *v;
      if (auto v = r.integer("sample_every")) p.sample_every = static_cast<std::size_t>(*v);
      if (auto v = r.quantity("initial_temperature", Dimension::temperature)) p.initial_temperature = *v;
      if (auto v = r.boolean("from_equilibrium")) p.from_equilibrium = *v;
      break;
    }
    case Protocol::quench: {
      parse_relax_keys(r, cfg.relax);
      auto& p = cfg.quench;
      if (auto v = r.choice<QuenchControl>("control", {{"radial_frequency", QuenchControl::radial_frequency},
                                                       {"axial_frequency", QuenchControl::axial_frequency}})) {
        p.control = *v;
      }
      if (auto v = r.choice<QuenchShape>("shape", {{"linear", QuenchShape::linear}, {"smoothstep", QuenchShape::smoothstep}})) {
        p.shape = *v;
      }
      p.start_value = r.require_quantity("start_value", Dimension::frequency);
      p.end_value = r.require_quantity("end_value", Dimension::frequency);
      if (auto v = r.list("durations", Dimension::time)) p.durations = *v;
      if (p.durations.empty()) throw ConfigError("[protocol] quench needs 'durations'");
      for (double d : p.durations) {
        if (!(d > 0.0)) throw ConfigError(r.context("durations") + "quench durations must be > 0");
      }
      if (auto v = r.integer("seeds")) p.seeds = static_cast<std::size_t>(*v);
      if (p.seeds == 0) throw ConfigError(r.context("seeds") + "must be >= 1");
      if (auto v = r.quantity("hold_factor", Dimension::none)) p.hold_factor = *v;
      if (auto v = r.quantity("dt", Dimension::time)) p.dt = *v;
      if (!cfg.trap.is_linear()) throw ConfigError("[protocol] quench needs a linear_rf trap");
      break;
    }
    case Protocol::scan: {
      parse_relax_keys(r, cfg.relax);
      auto& p = cfg.scan;
      const auto param = r.choice<ScanParameter>("parameter", kScanParameters);
      if (!param) throw ConfigError("[protocol] scan needs 'parameter'");
      p.parameter = *param;
      const Dimension d = scan_dimension(p.parameter);
      int given = 0;
      if (auto v = r.list("values", d)) {
        p.values = *v;
        ++given;
      }
      if (r.has("linspace")) {
        p.values = grid_from(r, "linspace", d, false);
        ++given;
      }
      if (r.has("geomspace")) {
        p.values = grid_from(r, "geomspace", d, true);
        ++given;
      }
      if (given != 1) throw ConfigError("[protocol] scan needs exactly one of 'values', 'linspace', 'geomspace'");
      if (p.values.empty()) throw ConfigError("[protocol] scan grid is empty");
      const bool up = p.values.size() < 2 || p.values[1] > p.values[0];
      for (std::size_t k = 1; k < p.values.size(); ++k) {
        if (up ? !(p.values[k] > p.values[k - 1]) : !(p.values[k] < p.values[k - 1])) {
          throw ConfigError("[protocol] scan grid must be strictly monotone");
        }
      }
      const bool penning_only = p.parameter == ScanParameter::normalized_axial_frequency ||
                                p.parameter == ScanParameter::rotation_frequency;
      const bool linear_only = p.parameter == ScanParameter::anisotropy || p.parameter == ScanParameter::radial_frequency;
      if (penning_only && !cfg.trap.is_penning()) throw ConfigError("[protocol] scan parameter needs a Penning trap");
      if (linear_only && !cfg.trap.is_linear()) throw ConfigError("[protocol] scan parameter needs a linear_rf trap");
      break;
    }
    case Protocol::image: {
      parse_relax_keys(r, cfg.relax);
      auto& p = cfg.image;
      auto& c = p.camera;
      c.exposure = r.require_quantity("exposure", Dimension::time);
      if (auto v = r.quantity("start_time", Dimension::time)) c.start_time = *v;
      if (auto v = r.quantity("sample_interval", Dimension::time)) p.sample_interval = *v;
      if (auto v = r.quantity("temperature", Dimension::temperature)) p.temperature = *v;
      if (auto v = r.quantity("pixel_pitch", Dimension::length)) c.pixel_pitch = *v;
      if (auto v = r.quantity("psf_sigma", Dimension::length)) c.psf_sigma = *v;
      if (auto v = r.integer("width")) c.width = static_cast<int>(*v);
      if (auto v = r.integer("height")) c.height = static_cast<int>(*v);
      if (auto v = r.choice<ViewAxis>("view", {{"x", ViewAxis::x}, {"y", ViewAxis::y}, {"z", ViewAxis::z}})) {
        c.view_axis = *v;
      }
      const auto gate = r.choice<int>("gate", {{"none", 0}, {"rotation", 1}, {"rf", 2}}).value_or(0);
      if (auto v = r.quantity("gate_window", Dimension::angle)) c.gate.phase_window = *v;
      if (auto v = r.quantity("gate_phase", Dimension::angle)) c.gate.phase_offset = *v;
      if (cfg.trap.is_penning()) {
        c.blur_angular_frequency = cfg.trap.penning().rotation_angular_frequency;
      } else if (cfg.trap.rf_mode == RfMode::full_drive) {
        c.blur_angular_frequency = cfg.trap.linear().rf_angular_frequency;
      }
      if (gate == 1) {
        if (!cfg.trap.is_penning()) throw ConfigError(r.context("gate") + "rotation gating needs a Penning trap");
        c.gate.enabled = true;
        c.gate.reference = GateReference::rotation;
        c.gate.reference_angular_frequency = cfg.trap.penning().rotation_angular_frequency;
      } else if (gate == 2) {
        if (!cfg.trap.is_linear()) throw ConfigError(r.context("gate") + "RF gating needs a linear_rf trap");
        c.gate.enabled = true;
        c.gate.reference = GateReference::rf;
        c.gate.reference_angular_frequency = cfg.trap.linear().rf_angular_frequency;
      }
      try {
        validate_camera(c);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("[protocol] ") + e.what());
      }
      break;
    }
  }
  r.finish();
}

}  // namespace

const char* to_string(Protocol p) {
  for (const auto& [name, value] : kProtocols) {
    if (value == p) return name.c_str();
  }
  return "relax";
}

Protocol protocol_from_string(std::string_view name) {
  const std::string n = lower(trim(name));
  for (const auto& [k, v] : kProtocols) {
    if (k == n) return v;
  }
  throw ConfigError("unknown protocol '" + std::string(name) + "' (use relax, modes, evolve, quench, scan, image)");
}

const char* to_string(ScanParameter p) {
  for (const auto& [name, value] : kScanParameters) {
    if (value == p) return name.c_str();
  }
  return "anisotropy";
}

SpeciesTable ExperimentConfig::species_table() const {
  SpeciesTable t;
  for (const auto& e : species) t.push_back(e.species);
  return t;
}

std::size_t ExperimentConfig::ion_count() const {
  std::size_t n = 0;
  for (const auto& e : species) n += e.count;
  return n;
}

std::vector<std::size_t> ExperimentConfig::ion_species() const {
  // Largest-remainder interleave: ion k goes to the species furthest behind
  // its share.
  const std::size_t n = ion_count();
  std::vector<std::size_t> out;
  out.reserve(n);
  std::vector<std::size_t> placed(species.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t s = 0; s < species.size(); ++s) {
      if (placed[s] >= species[s].count) continue;
      const double deficit = static_cast<double>(species[s].count) * static_cast<double>(k + 1) / static_cast<double>(n) -
                             static_cast<double>(placed[s]);
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    out.push_back(best);
    ++placed[best];
  }
  return out;
}

bool needs_seed(const ExperimentConfig& c) {
  switch (c.protocol) {
    case Protocol::evolve:
    case Protocol::quench:
      return true;
    case Protocol::image:
      return c.image.temperature > 0.0 || (c.trap.is_linear() && c.trap.rf_mode == RfMode::full_drive) ||
             c.relax.anneal || c.relax.restarts > 0 || c.trap.is_penning();
    default: {
      const StartKind start = c.relax.start.value_or(c.trap.is_penning() ? StartKind::cloud : StartKind::lattice);
      return c.relax.anneal || c.relax.restarts > 0 || start == StartKind::cloud;
    }
  }
}

double parse_quantity(std::string_view text, Dimension d) {
  const auto [v, unit] = split_number(text);
  return v * unit_factor(unit, d);
}

std::vector<double> parse_quantity_list(std::string_view text, Dimension d) {
  std::vector<std::pair<double, std::string>> items;
  std::size_t start = 0;
  const std::string t(text);
  while (start <= t.size()) {
    const std::size_t comma = t.find(',', start);
    const std::string item = t.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    items.push_back(split_number(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  // A unit on the last item applies to items that carry none.
  const std::string trailing = items.back().second;
  std::vector<double> out;
  for (auto& [v, unit] : items) out.push_back(v * unit_factor(unit.empty() ? trailing : unit, d));
  return out;
}

std::vector<RawSection> read_sections(std::string_view text) {
  std::vector<RawSection> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      const std::string name = trim(std::string_view(s).substr(1, s.size() - 2));
      if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      for (const auto& sec : out) {
        if (sec.first == name) throw ConfigError("line " + std::to_string(lineno) + ": duplicate section [" + name + "]");
      }
      out.push_back({name, {}});
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (out.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside of any section");
    const std::string key = trim(std::string_view(s).substr(0, eq));
    const std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    for (const auto& e : out.back().second) {
      if (e.key == key) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    out.back().second.push_back({key, value, lineno});
  }
  return out;
}

void apply_override(std::vector<RawSection>& sections, std::string_view assignment) {
  const std::string a(assignment);
  const auto eq = a.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + a + "' must look like section.key=value");
  const std::string lhs = trim(std::string_view(a).substr(0, eq));
  const auto dot = lhs.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
    throw ConfigError("override '" + a + "' must look like section.key=value");
  }
  const std::string section = lhs.substr(0, dot);
  const std::string key = lhs.substr(dot + 1);
  const std::string value = trim(std::string_view(a).substr(eq + 1));
  auto it = std::find_if(sections.begin(), sections.end(), [&](const RawSection& s) { return s.first == section; });
  if (it == sections.end()) {
    sections.push_back({section, {}});
    it = sections.end() - 1;
  }
  for (auto& e : it->second) {
    if (e.key == key) {
      e.value = value;
      e.line = 0;
      return;
    }
  }
  it->second.push_back({key, value, 0});
}

ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  auto sections = read_sections(text);
  for (const auto& o : overrides) apply_override(sections, o);

  ExperimentConfig cfg;
  const RawSection* run = nullptr;
  const RawSection* trap = nullptr;
  const RawSection* cooling = nullptr;
  const RawSection* protocol = nullptr;
  const RawSection* output = nullptr;
  std::vector<const RawSection*> species;
  for (const auto& s : sections) {
    if (s.first == "run") run = &s;
    else if (s.first == "trap") trap = &s;
    else if (s.first == "cooling") cooling = &s;
    else if (s.first == "protocol") protocol = &s;
    else if (s.first == "output") output = &s;
    else if (s.first.rfind("species:", 0) == 0 && s.first.size() > 8) species.push_back(&s);
    else throw ConfigError("unknown section [" + s.first + "]");
  }
  if (!run) throw ConfigError("missing [run] section");
  {
    SectionReader r(*run);
    const auto p = r.choice<Protocol>("protocol", kProtocols);
    if (!p) throw ConfigError("[run] missing required key 'protocol'");
    cfg.protocol = *p;
    if (auto s = r.integer("seed")) cfg.seed = *s;
    r.finish();
  }
  if (species.empty()) throw ConfigError("at least one [species:<name>] section is required");
  for (const auto* s : species) {
    SectionReader r(*s);
    parse_species(r, s->first.substr(8), cfg);
  }
  if (!trap) throw ConfigError("missing [trap] section");
  {
    SectionReader r(*trap);
    parse_trap(r, cfg);
  }
  if (cooling) {
    SectionReader r(*cooling);
    parse_cooling(r, cfg.cooling);
  }
  if (protocol) {
    SectionReader r(*protocol);
    parse_protocol(r, cfg);
  } else {
    static const RawSection empty{"protocol", {}};
    SectionReader r(empty);
    parse_protocol(r, cfg);
  }
  if (output) {
    SectionReader r(*output);
    if (auto d = r.text("directory")) {
      if (d->empty()) throw ConfigError(r.context("directory") + "must not be empty");
      cfg.output.directory = *d;
    }
    if (auto v = r.choice<bool>("pgm", {{"binary", true}, {"ascii", false}})) cfg.output.pgm_binary = *v;
    r.finish();
  }
  cfg.image.binary = cfg.output.pgm_binary;
  if (needs_seed(cfg) && !cfg.seed) {
    throw ConfigError(std::string("[run] seed is required for the stochastic protocol '") + to_string(cfg.protocol) + "'");
  }
  if (cfg.protocol == Protocol::quench && cfg.trap.rf_mode == RfMode::full_drive) {
    throw ConfigError("[trap] quench needs rf_mode = pseudopotential");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[run]\nprotocol = " << to_string(c.protocol) << "\n";
  if (c.seed) o << "seed = " << *c.seed << "\n";
  for (const auto& e : c.species) {
    o << "\n[species:" << e.species.name << "]\n";
    o << "mass = " << num(e.species.mass) << " kg\n";
    o << "charge = " << std::lround(e.species.charge_number()) << "\n";
    o << "fluorescent = " << (e.species.fluorescent ? "true" : "false") << "\n";
    o << "cooled = " << (e.species.cooled ? "true" : "false") << "\n";
    o << "count = " << e.count << "\n";
  }
  o << "\n[trap]\n";
  if (c.trap.is_linear()) {
    const auto& t = c.trap.linear();
    o << "type = linear_rf\n";
    o << "rf_mode = " << (c.trap.rf_mode == RfMode::full_drive ? "full_drive" : "pseudopotential") << "\n";
    o << "r0 = " << num(t.r0) << " m\n";
    o << "rf_amplitude = " << num(t.rf_amplitude) << " V\n";
    o << "rf_frequency = " << num(t.rf_angular_frequency) << " rad/s\n";
    o << "axial_frequency = " << num(t.axial_angular_frequency) << " rad/s\n";
    o << "radial_asymmetry = " << num(t.radial_asymmetry) << "\n";
    o << "stray_field = " << num(t.stray_field.x) << ", " << num(t.stray_field.y) << ", " << num(t.stray_field.z)
      << " V/m\n";
  } else {
    const auto& t = c.trap.penning();
    o << "type = penning\n";
    o << "u0 = " << num(t.u0) << " V\n";
    o << "z0 = " << num(t.z0) << " m\n";
    o << "r0 = " << num(t.r0) << " m\n";
    o << "magnetic_field = " << num(t.magnetic_field) << " T\n";
    o << "rotation_frequency = " << num(t.rotation_angular_frequency) << " rad/s\n";
    o << "wall_strength = " << num(t.wall_strength) << " V/m^2\n";
  }
  const auto& cm = c.cooling;
  o << "\n[cooling]\n";
  o << "friction_rate = " << num(cm.friction_rate) << " 1/s\n";
  o << "target_temperature = " << num(cm.target_temperature) << " K\n";
  o << "beam = " << to_string(cm.beam) << "\n";
  o << "beam_offset = " << num(cm.beam_offset) << " m\n";
  o << "beam_waist = " << num(cm.beam_waist) << " m\n";
  o << "extra_heating_rate = " << num(cm.extra_heating_rate) << " K/s\n";

  o << "\n[protocol]\n";
  const auto& rp = c.relax;
  o << "anneal = " << (rp.anneal ? "true" : "false") << "\n";
  o << "restarts = " << rp.restarts << "\n";
  if (rp.start) o << "start = " << (*rp.start == StartKind::cloud ? "cloud" : "lattice") << "\n";
  o << "force_tolerance = " << num(rp.force_tolerance) << " N\n";
  auto list = [&](const std::vector<double>& v, const char* unit) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + num(v[k]);
    if (*unit) s += std::string(" ") + unit;
    return s;
  };
  switch (c.protocol) {
    case Protocol::relax:
    case Protocol::modes:
      break;
    case Protocol::evolve: {
      const auto& p = c.evolve;
      o << "duration = " << num(p.duration) << " s\n";
      o << "dt = " << num(p.dt) << " s\n";
      o << "sample_every = " << p.sample_every << "\n";
      o << "initial_temperature = " << num(p.initial_temperature) << " K\n";
      o << "from_equilibrium = " << (p.from_equilibrium ? "true" : "false") << "\n";
      break;
    }
    case Protocol::quench: {
      const auto& p = c.quench;
      o << "control = " << (p.control == QuenchControl::axial_frequency ? "axial_frequency" : "radial_frequency") << "\n";
      o << "shape = " << (p.shape == QuenchShape::smoothstep ? "smoothstep" : "linear") << "\n";
      o << "start_value = " << num(p.start_value) << " rad/s\n";
      o << "end_value = " << num(p.end_value) << " rad/s\n";
      o << "durations = " << list(p.durations, "s") << "\n";
      o << "seeds = " << p.seeds << "\n";
      o << "hold_factor = " << num(p.hold_factor) << "\n";
      o << "dt = " << num(p.dt) << " s\n";
      break;
    }
    case Protocol::scan: {
      const auto& p = c.scan;
      o << "parameter = " << to_string(p.parameter) << "\n";
      o << "values = " << list(p.values, scan_dimension(p.parameter) == Dimension::none ? "" : "rad/s") << "\n";
      break;
    }
    case Protocol::image: {
      const auto& p = c.image;
      const auto& cam = p.camera;
      o << "exposure = " << num(cam.exposure) << " s\n";
      o << "start_time = " << num(cam.start_time) << " s\n";
      o << "sample_interval = " << num(p.sample_interval) << " s\n";
      o << "temperature = " << num(p.temperature) << " K\n";
      o << "pixel_pitch = " << num(cam.pixel_pitch) << " m\n";
      o << "psf_sigma = " << num(cam.psf_sigma) << " m\n";
      o << "width = " << cam.width << "\n";
      o << "height = " << cam.height << "\n";
      o << "view = " << (cam.view_axis == ViewAxis::x ? "x" : cam.view_axis == ViewAxis::y ? "y" : "z") << "\n";
      o << "gate = "
        << (!cam.gate.enabled ? "none" : cam.gate.reference == GateReference::rotation ? "rotation" : "rf") << "\n";
      o << "gate_window = " << num(cam.gate.phase_window) << " rad\n";
      o << "gate_phase = " << num(cam.gate.phase_offset) << " rad\n";
      break;
    }
  }
  o << "\n[output]\ndirectory = " << c.output.directory << "\n";
  o << "pgm = " << (c.output.pgm_binary ? "binary" : "ascii") << "\n";
  return o.str();
}

}  // namespace icc
