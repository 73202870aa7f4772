#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace icc {

struct IonSpecies {
  std::string name;
  double mass = 0.0;    // kg
  double charge = 0.0;  // C
  bool fluorescent = true;
  bool cooled = true;

  double charge_number() const;

  friend bool operator==(const IonSpecies&, const IonSpecies&) = default;
};

using SpeciesTable = std::vector<IonSpecies>;

// Builds a species from explicit values; throws ConfigError if mass or charge
// is not positive or the charge is not an integer multiple of e.
IonSpecies make_species(std::string name, double mass_kg, int charge_number, bool fluorescent = true,
                        bool cooled = true);

// Singly charged isotopes; masses are neutral-atom isotope masses (AME2020)
// in kg. Throws ConfigError listing the catalog for unknown names.
IonSpecies species_from_catalog(std::string_view name);

std::vector<std::string> catalog_names();

}  // namespace icc
