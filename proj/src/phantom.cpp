#include "dect/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "dect/rng.hpp"

namespace dect {

bool Ellipse::contains(double x_cm, double y_cm) const {
    double dx = x_cm - center_cm.x;
    double dy = y_cm - center_cm.y;
    double c = std::cos(rotation_rad), s = std::sin(rotation_rad);
    double u = c * dx + s * dy;
    double v = -s * dx + c * dy;
    double ua = u / semi_a_cm;
    double vb = v / semi_b_cm;
    return ua * ua + vb * vb <= 1.0;
}

void PhantomSpec::validate() const {
    if (!(field_of_view_cm > 0.0))
        throw Error(ErrorKind::config, "phantom: field_of_view_cm must be positive");
    for (std::size_t i = 0; i < ellipses.size(); ++i) {
        const Ellipse& e = ellipses[i];
        if (!(e.semi_a_cm > 0.0) || !(e.semi_b_cm > 0.0))
            throw Error(ErrorKind::config,
                        "phantom: ellipse " + std::to_string(i) + " has non-positive semi-axis");
    }
}

BasisImage::BasisImage(std::size_t nx, std::size_t ny, double pixel_cm)
    : n_x(nx), n_y(ny), pixel_size_cm(pixel_cm) {
    if (nx == 0 || ny == 0)
        throw Error(ErrorKind::config, "BasisImage: image dims must be positive");
    channel[0].assign(nx * ny, 0.0);
    channel[1].assign(nx * ny, 0.0);
}

void BasisImage::check_same_shape(const BasisImage& other, const std::string& what) const {
    if (n_x != other.n_x || n_y != other.n_y)
        throw Error(ErrorKind::mismatch, what + ": image shape mismatch");
}

BasisImage rasterize(const PhantomSpec& spec, std::size_t n_x, std::size_t n_y) {
    spec.validate();
    if (n_x == 0 || n_y == 0)
        throw Error(ErrorKind::config, "rasterize: image dims must be positive");
    double ps = spec.field_of_view_cm / static_cast<double>(n_x);
    BasisImage img(n_x, n_y, ps);
    double cx = (static_cast<double>(n_x) - 1.0) / 2.0;
    double cy = (static_cast<double>(n_y) - 1.0) / 2.0;
    for (std::size_t iy = 0; iy < n_y; ++iy) {
        double y = (static_cast<double>(iy) - cy) * ps;
        for (std::size_t ix = 0; ix < n_x; ++ix) {
            double x = (static_cast<double>(ix) - cx) * ps;
            // Painter's order: last containing ellipse wins.
            for (auto it = spec.ellipses.rbegin(); it != spec.ellipses.rend(); ++it) {
                if (it->contains(x, y)) {
                    img.at(0, ix, iy) = it->composition[0];
                    img.at(1, ix, iy) = it->composition[1];
                    break;
                }
            }
        }
    }
    return img;
}

namespace {

// Chord of the ray point + t*u (u unit) through an ellipse, as [t0, t1].
bool chord_interval(const Ellipse& e, Vec2 p, Vec2 u, double& t0, double& t1) {
    double c = std::cos(e.rotation_rad), s = std::sin(e.rotation_rad);
    // Rotate into the ellipse frame and scale axes to a unit circle.
    double px = (c * (p.x - e.center_cm.x) + s * (p.y - e.center_cm.y)) / e.semi_a_cm;
    double py = (-s * (p.x - e.center_cm.x) + c * (p.y - e.center_cm.y)) / e.semi_b_cm;
    double ux = (c * u.x + s * u.y) / e.semi_a_cm;
    double uy = (-s * u.x + c * u.y) / e.semi_b_cm;
    double A = ux * ux + uy * uy;
    double B = 2.0 * (px * ux + py * uy);
    double C = px * px + py * py - 1.0;
    double disc = B * B - 4.0 * A * C;
    if (disc <= 0.0 || A == 0.0)
        return false;
    double sq = std::sqrt(disc);
    t0 = (-B - sq) / (2.0 * A);
    t1 = (-B + sq) / (2.0 * A);
    return true;
}

}  // namespace

std::array<double, 2> analytic_path_integral(const PhantomSpec& spec, Vec2 point,
                                             Vec2 direction) {
    spec.validate();
    double norm = std::hypot(direction.x, direction.y);
    if (!(norm > 0.0))
        throw Error(ErrorKind::mismatch, "analytic_path_integral: zero direction");
    Vec2 u{direction.x / norm, direction.y / norm};

    struct Hit {
        double t0, t1;
        std::size_t index;
    };
    std::vector<Hit> hits;
    std::vector<double> cuts;
    for (std::size_t i = 0; i < spec.ellipses.size(); ++i) {
        double t0, t1;
        if (chord_interval(spec.ellipses[i], point, u, t0, t1)) {
            hits.push_back({t0, t1, i});
            cuts.push_back(t0);
            cuts.push_back(t1);
        }
    }
    std::array<double, 2> total{0.0, 0.0};
    if (hits.empty())
        return total;
    std::sort(cuts.begin(), cuts.end());
    // Each elementary segment between consecutive cuts is covered by a single
    // topmost ellipse (or none); convexity makes midpoint membership exact.
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        double len = cuts[k + 1] - cuts[k];
        if (len <= 0.0)
            continue;
        double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const Hit* top = nullptr;
        for (const Hit& h : hits)
            if (mid > h.t0 && mid < h.t1 && (!top || h.index > top->index))
                top = &h;
        if (top) {
            total[0] += len * spec.ellipses[top->index].composition[0];
            total[1] += len * spec.ellipses[top->index].composition[1];
        }
    }
    return total;
}

std::vector<PhantomSpec> make_phantom_family(std::uint64_t seed, std::size_t count,
                                             const std::string& family,
                                             double field_of_view_cm) {
    if (count == 0)
        throw Error(ErrorKind::config, "make_phantom_family: count must be > 0");
    if (family != "discs")
        throw Error(ErrorKind::config, "make_phantom_family: unknown family '" + family + "'");

    std::vector<PhantomSpec> specs;
    specs.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        SplitMix64 rng(split_stream(seed, n));
        auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.next_double(); };

        PhantomSpec spec;
        spec.field_of_view_cm = field_of_view_cm;

        Ellipse body;
        double body_r = uniform(0.36, 0.44) * field_of_view_cm;
        body.center_cm = {uniform(-0.02, 0.02) * field_of_view_cm,
                          uniform(-0.02, 0.02) * field_of_view_cm};
        body.semi_a_cm = body_r;
        body.semi_b_cm = body_r * uniform(0.85, 1.0);
        body.rotation_rad = uniform(0.0, 3.141592653589793);
        body.composition = {uniform(0.9, 1.1), 0.0};
        spec.ellipses.push_back(body);

        std::size_t inserts = 2 + static_cast<std::size_t>(rng.next_u64() % 4);  // 2..5
        for (std::size_t k = 0; k < inserts; ++k) {
            Ellipse ins;
            double r = uniform(0.0, 0.55) * body_r;
            double phi = uniform(0.0, 6.283185307179586);
            ins.center_cm = {body.center_cm.x + r * std::cos(phi),
                             body.center_cm.y + r * std::sin(phi)};
            ins.semi_a_cm = uniform(0.08, 0.22) * body_r;
            ins.semi_b_cm = uniform(0.08, 0.22) * body_r;
            ins.rotation_rad = uniform(0.0, 3.141592653589793);
            double c1 = uniform(0.8, 1.2);
            double c2 = (rng.next_double() < 0.5) ? 0.0 : uniform(0.1, 0.8);
            ins.composition = {c1, c2};
            spec.ellipses.push_back(ins);
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<BasisImage> make_dataset(std::uint64_t seed, std::size_t count,
                                     const std::string& family, std::size_t n_x,
                                     std::size_t n_y) {
    auto specs = make_phantom_family(seed, count, family);
    std::vector<BasisImage> images;
    images.reserve(count);
    for (const auto& spec : specs)
        images.push_back(rasterize(spec, n_x, n_y));
    return images;
}

}  // namespace dect
