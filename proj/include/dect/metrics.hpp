#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dect/forward_model.hpp"
#include "dect/phantom.hpp"

namespace dect {

// Homogeneous evaluation region: member pixels plus the composition whose
// table LAC serves as the reference curve.
struct RoiSpec {
    std::string label;
    std::vector<std::size_t> pixels;  // flat indices iy * n_x + ix
    double c1_ref = 0.0;
    double c2_ref = 0.0;

    // Nonempty, in range, and free of duplicates.
    void validate(std::size_t image_pixels) const;
};

// Pixels whose centers fall strictly inside the ellipse; the image is
// centered on the field of view like the rasterizer.
RoiSpec roi_from_ellipse(const Ellipse& e, std::size_t n_x, std::size_t n_y,
                         double pixel_size_cm, const std::string& label);

struct RmaeCurve {
    std::string label;
    std::vector<double> energies_keV;
    std::vector<double> value;
};

// RMAE(E) = [ mean_{x in ROI} |c1(x) mu1(E) + c2(x) mu2(E) - mu_ref(E)| ] / mu_ref(E)
// with mu_ref(E) the LAC of the reference composition. Pixels are summed in
// ascending index order no matter how the mask lists them.
RmaeCurve rmae(const BasisImage& c, const RoiSpec& roi, const ScanModel& m,
               const std::vector<double>& energies_keV);

// Monochromatic LAC image c1 mu1(E) + c2 mu2(E), units 1/cm.
std::vector<double> lac_image(const BasisImage& c, const ScanModel& m,
                              double energy_keV);

enum class ProfileAxis { row, column };

// One row (fixed y) or column (fixed x) of a plane, unmodified.
std::vector<double> profile(const std::vector<double>& plane, std::size_t n_x,
                            std::size_t n_y, ProfileAxis axis, std::size_t index);

struct Series {
    std::string label;
    std::vector<double> y;
};

// One report figure: a shared abscissa with one series per method.
struct Figure {
    std::string name;     // file stem, also the chart title
    std::string x_label;  // "energy_keV", "position", ...
    std::string y_label;
    std::vector<double> x;
    std::vector<Series> series;
};

// Writes <name>.csv and a self-contained <name>.svg per figure into
// out_dir (created if missing). Returns the paths written.
std::vector<std::string> emit_report(const std::vector<Figure>& figures,
                                     const std::string& out_dir);

}  // namespace dect
