#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dect/common.hpp"

namespace dect {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Ellipse {
    Vec2 center_cm;
    double semi_a_cm = 1.0;
    double semi_b_cm = 1.0;
    double rotation_rad = 0.0;
    std::array<double, 2> composition{0.0, 0.0};  // basis weights (c1, c2)

    bool contains(double x_cm, double y_cm) const;
};

// Analytic phantom: list of ellipses in painter's order (later wins).
struct PhantomSpec {
    double field_of_view_cm = 6.4;
    std::vector<Ellipse> ellipses;

    void validate() const;
};

// Two-channel basis-weight image. Row-major, x fastest; row iy maps to
// y = (iy - (n_y-1)/2) * pixel_size_cm, same for x.
struct BasisImage {
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    double pixel_size_cm = 0.1;
    std::array<std::vector<double>, 2> channel;

    BasisImage() = default;
    BasisImage(std::size_t nx, std::size_t ny, double pixel_cm);

    std::size_t pixels() const { return n_x * n_y; }
    double& at(int ch, std::size_t ix, std::size_t iy) { return channel[ch][iy * n_x + ix]; }
    double at(int ch, std::size_t ix, std::size_t iy) const { return channel[ch][iy * n_x + ix]; }

    void check_same_shape(const BasisImage& other, const std::string& what) const;
};

// Pixel-center membership, no anti-aliasing; pixel size = fov / n_x.
BasisImage rasterize(const PhantomSpec& spec, std::size_t n_x, std::size_t n_y);

// Per-basis path lengths (cm) of the ray {point + t * direction}, with
// painter's-order overlap handling via interval subtraction. Invariant under
// rescaling of the direction vector.
std::array<double, 2> analytic_path_integral(const PhantomSpec& spec, Vec2 point,
                                             Vec2 direction);

// Randomized phantom family: a soft-tissue background disk with 2..5
// elliptical inserts. Background c1 ~ U(0.9, 1.1), c2 = 0. Insert
// c1 ~ U(0.8, 1.2); half the inserts carry a bone-like weight
// c2 ~ U(0.1, 0.8), the rest c2 = 0. Deterministic given seed.
std::vector<PhantomSpec> make_phantom_family(std::uint64_t seed, std::size_t count,
                                             const std::string& family = "discs",
                                             double field_of_view_cm = 6.4);

std::vector<BasisImage> make_dataset(std::uint64_t seed, std::size_t count,
                                     const std::string& family, std::size_t n_x,
                                     std::size_t n_y);

}  // namespace dect
