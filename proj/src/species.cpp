#include "icc/species.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "icc/constants.hpp"
#include "icc/error.hpp"

namespace icc {
namespace {

struct CatalogEntry {
  std::string_view name;
  double mass_u;
};

// Atomic masses from the 2020 Atomic Mass Evaluation.
constexpr std::array<CatalogEntry, 13> kCatalog{{
    {"Be9", 9.0121831},
    {"Mg24", 23.985041697},
    {"Mg25", 24.985836976},
    {"Mg26", 25.982592968},
    {"Al27", 26.98153841},
    {"Ca40", 39.962590851},
    {"Ca43", 42.95876644},
    {"Sr88", 87.9056125},
    {"Ba137", 136.90582714},
    {"Ba138", 137.90524700},
    {"Yb171", 170.9363258},
    {"Yb174", 173.9388664},
    {"Hg199", 198.96828064},
}};

}  // namespace

double IonSpecies::charge_number() const { return charge / PhysicalConstants::elementary_charge; }

IonSpecies make_species(std::string name, double mass_kg, int charge_number, bool fluorescent, bool cooled) {
  if (!(mass_kg > 0.0) || !std::isfinite(mass_kg)) {
    throw ConfigError("species '" + name + "': mass must be positive");
  }
  if (charge_number <= 0) {
    throw ConfigError("species '" + name + "': charge must be a positive multiple of e");
  }
  return IonSpecies{std::move(name), mass_kg, charge_number * PhysicalConstants::elementary_charge, fluorescent,
                    cooled};
}

IonSpecies species_from_catalog(std::string_view name) {
  for (const auto& e : kCatalog) {
    if (e.name == name) return make_species(std::string(name), amu_to_kg(e.mass_u), 1);
  }
  std::string msg = "unknown species '" + std::string(name) + "'; available:";
  for (const auto& e : kCatalog) {
    msg += ' ';
    msg += e.name;
  }
  throw ConfigError(msg);
}

std::vector<std::string> catalog_names() {
  std::vector<std::string> out;
  for (const auto& e : kCatalog) out.emplace_back(e.name);
  return out;
}

}  // namespace icc
