#include "dect/physics.hpp"

#include <cmath>

#include "dect/tensor.hpp"

namespace dect {

namespace {

void check_strictly_increasing(const std::vector<double>& e, const std::string& what) {
    if (e.empty())
        throw Error(ErrorKind::config, what + ": empty energy grid");
    for (std::size_t i = 0; i + 1 < e.size(); ++i)
        if (!(e[i] < e[i + 1]))
            throw Error(ErrorKind::config,
                        what + ": non-increasing energies at index " + std::to_string(i + 1));
    for (double v : e)
        if (!std::isfinite(v))
            throw Error(ErrorKind::config, what + ": non-finite energy");
}

}  // namespace

void Spectrum::validate() const {
    check_strictly_increasing(energies_keV, "spectrum '" + label + "'");
    if (fluence.size() != energies_keV.size())
        throw Error(ErrorKind::config, "spectrum '" + label + "': fluence/energy length mismatch");
    bool any_positive = false;
    for (double v : fluence) {
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorKind::config, "spectrum '" + label + "': negative fluence");
        if (v > 0.0)
            any_positive = true;
    }
    if (!any_positive)
        throw Error(ErrorKind::config, "spectrum '" + label + "': all fluence bins are zero");
}

void MaterialTable::validate() const {
    check_strictly_increasing(energies_keV, "material '" + material_name + "'");
    if (lac_per_cm.size() != energies_keV.size())
        throw Error(ErrorKind::config,
                    "material '" + material_name + "': lac/energy length mismatch");
    for (double v : lac_per_cm)
        if (!std::isfinite(v) || v <= 0.0)
            throw Error(ErrorKind::config,
                        "material '" + material_name + "': lac values must be positive");
}

double lac_at(const MaterialTable& table, double energy_keV) {
    const auto& e = table.energies_keV;
    if (energy_keV < e.front() || energy_keV > e.back())
        throw Error(ErrorKind::mismatch,
                    "lac_at: energy " + std::to_string(energy_keV) + " keV outside table '" +
                        table.material_name + "' span [" + std::to_string(e.front()) + ", " +
                        std::to_string(e.back()) + "]");
    // Binary search for the bracketing segment.
    std::size_t lo = 0, hi = e.size() - 1;
    while (hi - lo > 1) {
        std::size_t mid = (lo + hi) / 2;
        if (e[mid] <= energy_keV)
            lo = mid;
        else
            hi = mid;
    }
    if (energy_keV == e[lo])
        return table.lac_per_cm[lo];
    if (energy_keV == e[hi])
        return table.lac_per_cm[hi];
    double t = (energy_keV - e[lo]) / (e[hi] - e[lo]);
    return (1.0 - t) * table.lac_per_cm[lo] + t * table.lac_per_cm[hi];
}

Spectrum load_spectrum(const std::string& path, const std::string& label) {
    DenseArray t = read_csv_table(path, 2);
    Spectrum s;
    s.label = label.empty() ? path : label;
    s.energies_keV.resize(t.dims[0]);
    s.fluence.resize(t.dims[0]);
    for (std::size_t r = 0; r < t.dims[0]; ++r) {
        s.energies_keV[r] = t.at2(r, 0);
        s.fluence[r] = t.at2(r, 1);
    }
    s.validate();
    return s;
}

MaterialTable load_material(const std::string& path, const std::string& name) {
    DenseArray t = read_csv_table(path, 2);
    MaterialTable m;
    m.material_name = name.empty() ? path : name;
    m.energies_keV.resize(t.dims[0]);
    m.lac_per_cm.resize(t.dims[0]);
    for (std::size_t r = 0; r < t.dims[0]; ++r) {
        m.energies_keV[r] = t.at2(r, 0);
        m.lac_per_cm[r] = t.at2(r, 1);
    }
    m.validate();
    return m;
}

namespace {

DenseArray two_column(const std::vector<double>& a, const std::vector<double>& b) {
    DenseArray t({a.size(), 2});
    for (std::size_t r = 0; r < a.size(); ++r) {
        t.at2(r, 0) = a[r];
        t.at2(r, 1) = b[r];
    }
    return t;
}

}  // namespace

void save_spectrum(const std::string& path, const Spectrum& s) {
    write_csv_table(path, two_column(s.energies_keV, s.fluence), "energy_keV,fluence");
}

void save_material(const std::string& path, const MaterialTable& t) {
    write_csv_table(path, two_column(t.energies_keV, t.lac_per_cm), "energy_keV,lac_per_cm");
}

double total_fluence(const Spectrum& s) {
    double sum = 0.0;
    for (double v : s.fluence)
        sum += v;
    return sum;
}

double effective_energy(const Spectrum& s) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < s.fluence.size(); ++i) {
        sum += s.fluence[i];
        weighted += s.fluence[i] * s.energies_keV[i];
    }
    return weighted / sum;
}

}  // namespace dect
