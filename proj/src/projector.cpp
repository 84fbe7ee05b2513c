#include "dect/projector.hpp"

#include <cmath>

#include "dect/parallel.hpp"

namespace dect {

void Geometry::validate() const {
    if (n_angles == 0 || n_det == 0 || n_x == 0 || n_y == 0)
        throw Error(ErrorKind::config, "geometry: counts must be positive");
    if (angles_rad.size() != n_angles)
        throw Error(ErrorKind::config, "geometry: angle list length mismatch");
    if (!(det_spacing_cm > 0.0) || !(pixel_size_cm > 0.0))
        throw Error(ErrorKind::config, "geometry: spacings must be positive");
    double span = static_cast<double>(n_det) * det_spacing_cm;
    double diagonal = pixel_size_cm * std::hypot(static_cast<double>(n_x),
                                                 static_cast<double>(n_y));
    if (span < diagonal)
        throw Error(ErrorKind::config,
                    "geometry: detector span " + std::to_string(span) +
                        " cm does not cover the image diagonal " + std::to_string(diagonal) +
                        " cm");
}

Geometry make_uniform_geometry(std::size_t n_angles, std::size_t n_det,
                               double det_spacing_cm, std::size_t n_x, std::size_t n_y,
                               double pixel_size_cm) {
    Geometry g;
    g.n_angles = n_angles;
    g.n_det = n_det;
    g.det_spacing_cm = det_spacing_cm;
    g.n_x = n_x;
    g.n_y = n_y;
    g.pixel_size_cm = pixel_size_cm;
    g.angles_rad.resize(n_angles);
    for (std::size_t i = 0; i < n_angles; ++i)
        g.angles_rad[i] = 3.141592653589793 * static_cast<double>(i) /
                          static_cast<double>(n_angles);
    g.validate();
    return g;
}

void Sinogram::check_geometry(const Geometry& g, const std::string& what) const {
    if (n_angles != g.n_angles || n_det != g.n_det || values.size() != g.rays())
        throw Error(ErrorKind::mismatch, what + ": sinogram dims do not match geometry");
}

namespace {

// Enumerates the Joseph interpolation weights of one ray. The same
// enumeration backs forward and adjoint, which makes the adjoint the exact
// transpose by construction. visit(pixel, weight) with weight in cm.
template <typename Visit>
inline void trace_ray(const Geometry& g, double cos_a, double sin_a, double t,
                      Visit&& visit) {
    const double h = g.pixel_size_cm;
    const double cx = (static_cast<double>(g.n_x) - 1.0) / 2.0;
    const double cy = (static_cast<double>(g.n_y) - 1.0) / 2.0;
    if (std::fabs(cos_a) >= std::fabs(sin_a)) {
        // Drive along y: one interpolated sample per image row.
        const double len = h / std::fabs(cos_a);
        for (std::size_t iy = 0; iy < g.n_y; ++iy) {
            double y = (static_cast<double>(iy) - cy) * h;
            double fx = (t - y * sin_a) / (cos_a * h) + cx;
            double fl = std::floor(fx);
            if (fl < -1.0 || fl > static_cast<double>(g.n_x) - 1.0)
                continue;
            long ix0 = static_cast<long>(fl);
            double w = fx - fl;
            if (w < 1.0 && ix0 >= 0)
                visit(static_cast<std::size_t>(ix0) + iy * g.n_x, (1.0 - w) * len);
            if (w > 0.0 && ix0 + 1 < static_cast<long>(g.n_x))
                visit(static_cast<std::size_t>(ix0 + 1) + iy * g.n_x, w * len);
        }
    } else {
        // Drive along x.
        const double len = h / std::fabs(sin_a);
        for (std::size_t ix = 0; ix < g.n_x; ++ix) {
            double x = (static_cast<double>(ix) - cx) * h;
            double fy = (t - x * cos_a) / (sin_a * h) + cy;
            double fl = std::floor(fy);
            if (fl < -1.0 || fl > static_cast<double>(g.n_y) - 1.0)
                continue;
            long iy0 = static_cast<long>(fl);
            double w = fy - fl;
            if (w < 1.0 && iy0 >= 0)
                visit(ix + static_cast<std::size_t>(iy0) * g.n_x, (1.0 - w) * len);
            if (w > 0.0 && iy0 + 1 < static_cast<long>(g.n_y))
                visit(ix + static_cast<std::size_t>(iy0 + 1) * g.n_x, w * len);
        }
    }
}

}  // namespace

Sinogram forward(const std::vector<double>& img, const Geometry& geom) {
    geom.validate();
    if (img.size() != geom.pixels())
        throw Error(ErrorKind::mismatch, "forward: image size does not match geometry");
    Sinogram sino(geom.n_angles, geom.n_det);
    const double* in = img.data();
    double* out = sino.values.data();
    parallel_for(geom.rays(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            std::size_t ia = r / geom.n_det;
            std::size_t it = r % geom.n_det;
            double a = geom.angles_rad[ia];
            double sum = 0.0;
            trace_ray(geom, std::cos(a), std::sin(a), geom.det_offset(it),
                      [&](std::size_t p, double w) { sum += in[p] * w; });
            out[r] = sum;
        }
    });
    return sino;
}

std::vector<double> adjoint(const Sinogram& sino, const Geometry& geom) {
    geom.validate();
    sino.check_geometry(geom, "adjoint");
    std::vector<double> img(geom.pixels(), 0.0);
    const double* in = sino.values.data();
    parallel_accumulate(
        geom.rays(), geom.pixels(), img.data(),
        [&](std::size_t begin, std::size_t end, double* acc) {
            for (std::size_t r = begin; r < end; ++r) {
                double s = in[r];
                if (s == 0.0)
                    continue;
                std::size_t ia = r / geom.n_det;
                std::size_t it = r % geom.n_det;
                double a = geom.angles_rad[ia];
                trace_ray(geom, std::cos(a), std::sin(a), geom.det_offset(it),
                          [&](std::size_t p, double w) { acc[p] += s * w; });
            }
        });
    return img;
}

Sinogram row_sums(const Geometry& geom) {
    return forward(std::vector<double>(geom.pixels(), 1.0), geom);
}

std::vector<double> col_sums(const Geometry& geom) {
    Sinogram ones(geom.n_angles, geom.n_det);
    ones.values.assign(geom.rays(), 1.0);
    return adjoint(ones, geom);
}

}  // namespace dect
