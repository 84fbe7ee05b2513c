#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dect/forward_model.hpp"
#include "dect/metrics.hpp"
#include "dect/phantom.hpp"

namespace dect {

inline constexpr const char* kVersion = "0.1.0";

// Everything a command needs to rebuild the scan model: geometry plus
// spectrum/material table references. Table paths resolve in order:
// absolute, relative to the scenario file, relative to $DECT_DATA_DIR.
struct Scenario {
    Geometry geometry;
    std::string spectrum_low_path, spectrum_high_path;
    std::string material1_path, material2_path;  // resolved at load
    double fluence_scale = 1.0;
};

Scenario load_scenario(const std::string& json_path);
ScanModel build_scan_model(const Scenario& sc);

PhantomSpec load_phantom_spec(const std::string& json_path);

// ROI entries carry either an ellipse (rasterized here) or an explicit
// pixel list, plus the reference composition.
std::vector<RoiSpec> load_rois(const std::string& json_path, std::size_t n_x,
                               std::size_t n_y, double pixel_size_cm);

// Basis images are arrays with dims [2, n_y, n_x]; the pixel size comes
// from the geometry at load time.
void save_image(const std::string& path, const BasisImage& img);
BasisImage load_image(const std::string& path, const Geometry& geom);

// Sinogram pairs are arrays with dims [2, n_angles, n_det], low first.
void save_sinograms(const std::string& path, const SinogramPair& d);
SinogramPair load_sinograms(const std::string& path, const Geometry& geom);

// Reproducibility record written next to every command's outputs. The
// timing field is the only entry that varies between identical runs.
struct RunManifest {
    std::string command;
    std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
    std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool deterministic = false;
    double wall_seconds = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& man);

}  // namespace dect
