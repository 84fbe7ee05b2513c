#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dect/common.hpp"

namespace dect {

// 2D parallel-beam sampling. View ia measures line integrals along the
// direction (-sin a, cos a); detector bin it sits at signed offset
// t = (it - (n_det-1)/2) * det_spacing_cm along (cos a, sin a).
struct Geometry {
    std::size_t n_angles = 0;
    std::vector<double> angles_rad;
    std::size_t n_det = 0;
    double det_spacing_cm = 0.1;
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    double pixel_size_cm = 0.1;

    std::size_t rays() const { return n_angles * n_det; }
    std::size_t pixels() const { return n_x * n_y; }
    double det_offset(std::size_t it) const {
        return (static_cast<double>(it) - (static_cast<double>(n_det) - 1.0) / 2.0) *
               det_spacing_cm;
    }
    void validate() const;
};

Geometry make_uniform_geometry(std::size_t n_angles, std::size_t n_det,
                               double det_spacing_cm, std::size_t n_x, std::size_t n_y,
                               double pixel_size_cm);

// Measured or predicted values over n_angles x n_det, angle-major.
struct Sinogram {
    std::string label;  // "L" or "H"
    std::size_t n_angles = 0;
    std::size_t n_det = 0;
    std::vector<double> values;

    Sinogram() = default;
    Sinogram(std::size_t na, std::size_t nd, std::string lab = "")
        : label(std::move(lab)), n_angles(na), n_det(nd), values(na * nd, 0.0) {}

    double& at(std::size_t ia, std::size_t it) { return values[ia * n_det + it]; }
    double at(std::size_t ia, std::size_t it) const { return values[ia * n_det + it]; }
    void check_geometry(const Geometry& g, const std::string& what) const;
};

// Joseph-method line integrals (linear interpolation transverse to the
// driving axis), units cm x image units. img is row-major n_y x n_x.
Sinogram forward(const std::vector<double>& img, const Geometry& geom);

// Exact matrix transpose of forward: same weights, scatter instead of gather.
std::vector<double> adjoint(const Sinogram& sino, const Geometry& geom);

// forward(ones image) and adjoint(ones sinogram); the separable surrogate's
// curvature transfer needs both.
Sinogram row_sums(const Geometry& geom);
std::vector<double> col_sums(const Geometry& geom);

}  // namespace dect
