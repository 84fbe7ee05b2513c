#pragma once

#include <string>
#include <vector>

#include "dect/common.hpp"

namespace dect {

// Photon fluence per energy bin for one tube setting, with no object in the
// beam. Detector-independent at this scale (no bowtie).
struct Spectrum {
    std::string label;  // "L" or "H"
    std::vector<double> energies_keV;  // strictly increasing
    std::vector<double> fluence;       // >= 0, at least one positive bin

    void validate() const;
};

// Linear attenuation coefficient table for one basis material.
struct MaterialTable {
    std::string material_name;
    std::vector<double> energies_keV;  // strictly increasing
    std::vector<double> lac_per_cm;    // > 0

    void validate() const;
    double min_energy() const { return energies_keV.front(); }
    double max_energy() const { return energies_keV.back(); }
};

// Piecewise-linear interpolation; exact at nodes; no extrapolation.
double lac_at(const MaterialTable& table, double energy_keV);

Spectrum load_spectrum(const std::string& path, const std::string& label = "");
MaterialTable load_material(const std::string& path, const std::string& name = "");

void save_spectrum(const std::string& path, const Spectrum& s);
void save_material(const std::string& path, const MaterialTable& t);

double total_fluence(const Spectrum& s);

// Fluence-weighted mean energy, used by the image-domain decomposition.
double effective_energy(const Spectrum& s);

}  // namespace dect
