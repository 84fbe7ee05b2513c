#include "dect/scenario.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dect/physics.hpp"
#include "dect/tensor.hpp"

namespace dect {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::io, "cannot open '" + path + "'", IoCode::open_failed);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::config, "'" + path + "' is not valid JSON: " + e.what());
    }
}

// Field access with full dotted paths in every diagnostic.
const json& field(const json& j, const std::string& key, const std::string& file,
                  const std::string& path) {
    if (!j.is_object())
        throw Error(ErrorKind::config,
                    file + ": " + (path.empty() ? "top level" : path) + ": expected an object");
    auto it = j.find(key);
    if (it == j.end())
        throw Error(ErrorKind::config, file + ": missing field '" +
                                           (path.empty() ? key : path + "." + key) + "'");
    return *it;
}

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

double num_field(const json& j, const std::string& key, const std::string& file,
                 const std::string& path) {
    const json& v = field(j, key, file, path);
    if (!v.is_number())
        throw Error(ErrorKind::config,
                    file + ": " + join(path, key) + ": expected a number");
    return v.get<double>();
}

std::size_t uint_field(const json& j, const std::string& key, const std::string& file,
                       const std::string& path) {
    const json& v = field(j, key, file, path);
    if (!v.is_number_unsigned())
        throw Error(ErrorKind::config,
                    file + ": " + join(path, key) + ": expected an unsigned integer");
    return v.get<std::size_t>();
}

std::string str_field(const json& j, const std::string& key, const std::string& file,
                      const std::string& path) {
    const json& v = field(j, key, file, path);
    if (!v.is_string())
        throw Error(ErrorKind::config,
                    file + ": " + join(path, key) + ": expected a string");
    return v.get<std::string>();
}

std::array<double, 2> pair_field(const json& j, const std::string& key,
                                 const std::string& file, const std::string& path) {
    const json& v = field(j, key, file, path);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw Error(ErrorKind::config,
                    file + ": " + join(path, key) + ": expected [number, number]");
    return {v[0].get<double>(), v[1].get<double>()};
}

std::string resolve_table(const std::string& ref, const std::string& scenario_path,
                          const std::string& field_path) {
    namespace fs = std::filesystem;
    if (fs::path(ref).is_absolute()) {
        if (fs::exists(ref))
            return ref;
        throw Error(ErrorKind::io,
                    scenario_path + ": " + field_path + ": '" + ref + "' not found",
                    IoCode::open_failed);
    }
    std::vector<std::string> tried;
    const fs::path beside = fs::path(scenario_path).parent_path() / ref;
    if (fs::exists(beside))
        return beside.string();
    tried.push_back(beside.string());
    if (const char* env = std::getenv("DECT_DATA_DIR")) {
        const fs::path in_env = fs::path(env) / ref;
        if (fs::exists(in_env))
            return in_env.string();
        tried.push_back(in_env.string());
    }
    std::string msg = scenario_path + ": " + field_path + ": '" + ref + "' not found; tried";
    for (const std::string& t : tried)
        msg += " '" + t + "'";
    throw Error(ErrorKind::io, msg, IoCode::open_failed);
}

Ellipse parse_ellipse(const json& j, const std::string& file, const std::string& path,
                      bool need_composition) {
    Ellipse e;
    auto center = pair_field(j, "center_cm", file, path);
    e.center_cm = {center[0], center[1]};
    e.semi_a_cm = num_field(j, "semi_a_cm", file, path);
    e.semi_b_cm = num_field(j, "semi_b_cm", file, path);
    if (j.contains("rotation_rad"))
        e.rotation_rad = num_field(j, "rotation_rad", file, path);
    if (need_composition || j.contains("composition"))
        e.composition = pair_field(j, "composition", file, path);
    return e;
}

}  // namespace

Scenario load_scenario(const std::string& json_path) {
    const json j = parse_file(json_path);
    Scenario sc;

    const json& g = field(j, "geometry", json_path, "");
    sc.geometry = make_uniform_geometry(
        uint_field(g, "n_angles", json_path, "geometry"),
        uint_field(g, "n_det", json_path, "geometry"),
        num_field(g, "det_spacing_cm", json_path, "geometry"),
        uint_field(g, "n_x", json_path, "geometry"),
        uint_field(g, "n_y", json_path, "geometry"),
        num_field(g, "pixel_size_cm", json_path, "geometry"));
    sc.geometry.validate();

    const json& sp = field(j, "spectra", json_path, "");
    sc.spectrum_low_path =
        resolve_table(str_field(sp, "low", json_path, "spectra"), json_path, "spectra.low");
    sc.spectrum_high_path = resolve_table(str_field(sp, "high", json_path, "spectra"),
                                          json_path, "spectra.high");
    if (sp.contains("fluence_scale")) {
        sc.fluence_scale = num_field(sp, "fluence_scale", json_path, "spectra");
        if (!(sc.fluence_scale > 0.0))
            throw Error(ErrorKind::config,
                        json_path + ": spectra.fluence_scale: must be > 0");
    }

    const json& mats = field(j, "materials", json_path, "");
    sc.material1_path = resolve_table(str_field(mats, "basis1", json_path, "materials"),
                                      json_path, "materials.basis1");
    sc.material2_path = resolve_table(str_field(mats, "basis2", json_path, "materials"),
                                      json_path, "materials.basis2");
    return sc;
}

ScanModel build_scan_model(const Scenario& sc) {
    Spectrum lo = load_spectrum(sc.spectrum_low_path, "L");
    Spectrum hi = load_spectrum(sc.spectrum_high_path, "H");
    for (double& f : lo.fluence)
        f *= sc.fluence_scale;
    for (double& f : hi.fluence)
        f *= sc.fluence_scale;
    return make_scan_model(sc.geometry, lo, hi, load_material(sc.material1_path),
                           load_material(sc.material2_path));
}

PhantomSpec load_phantom_spec(const std::string& json_path) {
    const json j = parse_file(json_path);
    PhantomSpec spec;
    spec.field_of_view_cm = num_field(j, "field_of_view_cm", json_path, "");
    const json& arr = field(j, "ellipses", json_path, "");
    if (!arr.is_array() || arr.empty())
        throw Error(ErrorKind::config, json_path + ": ellipses: expected a nonempty array");
    for (std::size_t i = 0; i < arr.size(); ++i)
        spec.ellipses.push_back(
            parse_ellipse(arr[i], json_path, "ellipses[" + std::to_string(i) + "]", true));
    spec.validate();
    return spec;
}

std::vector<RoiSpec> load_rois(const std::string& json_path, std::size_t n_x,
                               std::size_t n_y, double pixel_size_cm) {
    const json j = parse_file(json_path);
    const json& arr = field(j, "rois", json_path, "");
    if (!arr.is_array() || arr.empty())
        throw Error(ErrorKind::config, json_path + ": rois: expected a nonempty array");
    std::vector<RoiSpec> rois;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "rois[" + std::to_string(i) + "]";
        const json& entry = arr[i];
        const std::string label = str_field(entry, "label", json_path, path);
        auto comp = pair_field(entry, "composition", json_path, path);
        RoiSpec roi;
        if (entry.contains("ellipse")) {
            Ellipse e = parse_ellipse(field(entry, "ellipse", json_path, path), json_path,
                                      path + ".ellipse", false);
            roi = roi_from_ellipse(e, n_x, n_y, pixel_size_cm, label);
        } else if (entry.contains("pixels")) {
            const json& px = field(entry, "pixels", json_path, path);
            if (!px.is_array() || px.empty())
                throw Error(ErrorKind::config, json_path + ": " + path +
                                                   ".pixels: expected a nonempty array");
            roi.label = label;
            for (const json& p : px) {
                if (!p.is_number_unsigned())
                    throw Error(ErrorKind::config,
                                json_path + ": " + path +
                                    ".pixels: expected unsigned integers");
                roi.pixels.push_back(p.get<std::size_t>());
            }
        } else {
            throw Error(ErrorKind::config,
                        json_path + ": " + path + ": needs 'ellipse' or 'pixels'");
        }
        roi.c1_ref = comp[0];
        roi.c2_ref = comp[1];
        roi.validate(n_x * n_y);
        rois.push_back(std::move(roi));
    }
    return rois;
}

void save_image(const std::string& path, const BasisImage& img) {
    DenseArray a;
    a.dims = {2, img.n_y, img.n_x};
    a.data.reserve(2 * img.pixels());
    for (int ch = 0; ch < 2; ++ch)
        a.data.insert(a.data.end(), img.channel[ch].begin(), img.channel[ch].end());
    write_array(path, a);
}

BasisImage load_image(const std::string& path, const Geometry& geom) {
    DenseArray a = read_array(path);
    if (a.dims.size() != 3 || a.dims[0] != 2 || a.dims[1] != geom.n_y ||
        a.dims[2] != geom.n_x)
        throw Error(ErrorKind::mismatch,
                    "'" + path + "': image dims do not match the scenario geometry");
    BasisImage img(geom.n_x, geom.n_y, geom.pixel_size_cm);
    const std::size_t plane = img.pixels();
    for (int ch = 0; ch < 2; ++ch)
        std::copy(a.data.begin() + ch * plane, a.data.begin() + (ch + 1) * plane,
                  img.channel[ch].begin());
    return img;
}

void save_sinograms(const std::string& path, const SinogramPair& d) {
    DenseArray a;
    a.dims = {2, d.low.n_angles, d.low.n_det};
    a.data.reserve(2 * d.low.values.size());
    a.data.insert(a.data.end(), d.low.values.begin(), d.low.values.end());
    a.data.insert(a.data.end(), d.high.values.begin(), d.high.values.end());
    write_array(path, a);
}

SinogramPair load_sinograms(const std::string& path, const Geometry& geom) {
    DenseArray a = read_array(path);
    if (a.dims.size() != 3 || a.dims[0] != 2 || a.dims[1] != geom.n_angles ||
        a.dims[2] != geom.n_det)
        throw Error(ErrorKind::mismatch,
                    "'" + path + "': sinogram dims do not match the scenario geometry");
    SinogramPair d;
    const std::size_t rays = geom.n_angles * geom.n_det;
    for (int j = 0; j < 2; ++j) {
        Sinogram& s = j == 0 ? d.low : d.high;
        s.label = j == 0 ? "L" : "H";
        s.n_angles = geom.n_angles;
        s.n_det = geom.n_det;
        s.values.assign(a.data.begin() + j * rays, a.data.begin() + (j + 1) * rays);
    }
    return d;
}

void write_manifest(const std::string& path, const RunManifest& man) {
    json j;
    j["command"] = man.command;
    j["version"] = kVersion;
    j["seed"] = man.seed;
    j["threads"] = man.threads;
    j["deterministic"] = man.deterministic;
    json inputs = json::object();
    for (const auto& [p, h] : man.inputs)
        inputs[p] = h;
    j["inputs"] = inputs;
    json outputs = json::object();
    for (const auto& [p, h] : man.outputs)
        outputs[p] = h;
    j["outputs"] = outputs;
    // Timing lives under its own key so determinism checks can ignore it.
    j["timing"] = {{"wall_seconds", man.wall_seconds}};

    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "cannot open '" + path + "'", IoCode::open_failed);
    out << j.dump(2) << "\n";
    if (!out)
        throw Error(ErrorKind::io, "write to '" + path + "' failed", IoCode::write_failed);
}

}  // namespace dect
