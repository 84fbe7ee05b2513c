#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dect/common.hpp"
#include "dect/forward_model.hpp"
#include "dect/phantom.hpp"
#include "dect/rng.hpp"

namespace {

std::string data_file(const std::string& name) {
    return std::string(DECT_SOURCE_ROOT) + "/data/" + name;
}

dect::ScanModel small_model(std::size_t n = 16, std::size_t n_angles = 8,
                            std::size_t n_det = 24) {
    dect::Geometry g = dect::make_uniform_geometry(n_angles, n_det, 0.12, n, n, 0.1);
    return dect::make_scan_model(g, dect::load_spectrum(data_file("spectrum_low.csv"), "L"),
                                 dect::load_spectrum(data_file("spectrum_high.csv"), "H"),
                                 dect::load_material(data_file("material_water.csv"), "water"),
                                 dect::load_material(data_file("material_bone.csv"), "bone"));
}

dect::BasisImage small_phantom_image(std::size_t n = 16) {
    dect::PhantomSpec spec;
    spec.field_of_view_cm = 0.1 * double(n);
    dect::Ellipse body;
    body.semi_a_cm = 0.055 * n;
    body.semi_b_cm = 0.045 * n;
    body.composition = {1.0, 0.0};
    dect::Ellipse insert;
    insert.center_cm = {0.015 * n, -0.01 * n};
    insert.semi_a_cm = 0.02 * n;
    insert.semi_b_cm = 0.015 * n;
    insert.composition = {0.9, 0.4};
    spec.ellipses = {body, insert};
    return dect::rasterize(spec, n, n);
}

}  // namespace

TEST_CASE("empty object predicts the total fluence on every ray") {
    dect::ScanModel m = small_model();
    dect::BasisImage zero(m.geometry.n_x, m.geometry.n_y, m.geometry.pixel_size_cm);
    dect::SinogramPair g = dect::predict(zero, m);
    double tl = dect::total_fluence(m.spectrum_low);
    double th = dect::total_fluence(m.spectrum_high);
    for (double v : g.low.values)
        CHECK(v == doctest::Approx(tl).epsilon(1e-12));
    for (double v : g.high.values)
        CHECK(v == doctest::Approx(th).epsilon(1e-12));
}

TEST_CASE("monoenergetic spectrum reduces to Beer's law") {
    dect::Geometry geom = dect::make_uniform_geometry(4, 24, 0.12, 16, 16, 0.1);
    dect::Spectrum mono;
    mono.label = "L";
    mono.energies_keV = {60.0};
    mono.fluence = {1000.0};
    dect::Spectrum mono_h;
    mono_h.label = "H";
    mono_h.energies_keV = {80.0};
    mono_h.fluence = {2000.0};
    dect::MaterialTable m1;
    m1.material_name = "m1";
    m1.energies_keV = {50.0, 100.0};
    m1.lac_per_cm = {0.2, 0.2};
    dect::MaterialTable m2;
    m2.material_name = "m2";
    m2.energies_keV = {50.0, 100.0};
    m2.lac_per_cm = {0.6, 0.3};
    dect::ScanModel m = dect::make_scan_model(geom, mono, mono_h, m1, m2);

    dect::BasisImage c(16, 16, 0.1);
    for (std::size_t p = 0; p < c.pixels(); ++p)
        c.channel[0][p] = 0.8;  // c2 stays zero

    dect::LineIntegrals lines = dect::project_basis(c, m);
    dect::SinogramPair g = dect::predict(c, m);
    for (std::size_t r = 0; r < m.geometry.rays(); ++r) {
        double want_l = 1000.0 * std::exp(-0.2 * lines.l1.values[r]);
        CHECK(g.low.values[r] == doctest::Approx(want_l).epsilon(1e-12));
    }
}

TEST_CASE("three-bin sweep matches the per-bin summation oracle") {
    // One pixel, one ray; line integrals forced by hand through the sweep.
    dect::Geometry geom;
    geom.n_angles = 1;
    geom.angles_rad = {0.0};
    geom.n_det = 1;
    geom.det_spacing_cm = 1.6;
    geom.n_x = 1;
    geom.n_y = 1;
    geom.pixel_size_cm = 1.0;

    dect::Spectrum sp;
    sp.label = "L";
    sp.energies_keV = {40.0, 60.0, 80.0};
    sp.fluence = {100.0, 200.0, 300.0};
    dect::Spectrum sp_h = sp;
    sp_h.label = "H";
    sp_h.fluence = {50.0, 100.0, 900.0};  // distinct effective energy
    dect::MaterialTable m1;
    m1.material_name = "m1";
    m1.energies_keV = {40.0, 60.0, 80.0};
    m1.lac_per_cm = {0.5, 0.3, 0.2};
    dect::MaterialTable m2;
    m2.material_name = "m2";
    m2.energies_keV = {40.0, 60.0, 80.0};
    m2.lac_per_cm = {1.5, 0.9, 0.6};
    dect::ScanModel m = dect::make_scan_model(geom, sp, sp_h, m1, m2);

    dect::LineIntegrals lines;
    lines.l1 = dect::Sinogram(1, 1);
    lines.l2 = dect::Sinogram(1, 1);
    lines.l1.values[0] = 1.0;
    lines.l2.values[0] = 0.5;
    dect::RaySweep sweep;
    dect::ray_sweep(lines, m, 1, sweep);
    // [DERIVED] frozen from an independent per-bin summation:
    //   g  = 100 e^{-1.25} + 200 e^{-0.75} + 300 e^{-0.5}
    CHECK(sweep.g[0][0] == doctest::Approx(305.08298814801196).epsilon(1e-13));
    CHECK(sweep.w1[0][0] == doctest::Approx(79.0590725902284).epsilon(1e-12));
    CHECK(sweep.w2[0][0] == doctest::Approx(237.17721777068516).epsilon(1e-12));
}

TEST_CASE("predict is monotone in each basis weight") {
    dect::ScanModel m = small_model();
    dect::BasisImage c = small_phantom_image();
    dect::SinogramPair g0 = dect::predict(c, m);
    dect::BasisImage c_up = c;
    for (double& v : c_up.channel[0])
        v += 0.1;
    dect::SinogramPair g1 = dect::predict(c_up, m);
    for (std::size_t r = 0; r < g0.low.values.size(); ++r) {
        CHECK(g1.low.values[r] <= g0.low.values[r] + 1e-12);
        CHECK(g1.high.values[r] <= g0.high.values[r] + 1e-12);
    }
}

TEST_CASE("simulate is deterministic and tracks huge means tightly") {
    dect::ScanModel m = small_model();
    dect::BasisImage c = small_phantom_image();
    dect::SinogramPair g = dect::predict(c, m);
    dect::SinogramPair d1 = dect::simulate(g, 42);
    dect::SinogramPair d2 = dect::simulate(g, 42);
    for (std::size_t r = 0; r < d1.low.values.size(); ++r) {
        CHECK(d1.low.values[r] == d2.low.values[r]);
        CHECK(d1.high.values[r] == d2.high.values[r]);
    }
    dect::SinogramPair d3 = dect::simulate(g, 43);
    bool identical = true;
    for (std::size_t r = 0; r < d1.low.values.size(); ++r)
        if (d1.low.values[r] != d3.low.values[r])
            identical = false;
    CHECK(!identical);

    // Relative deviation at mean 1e12 is below 1e-5 with overwhelming margin.
    dect::SinogramPair big;
    big.low = dect::Sinogram(1, 4, "L");
    big.high = dect::Sinogram(1, 4, "H");
    for (int i = 0; i < 4; ++i) {
        big.low.values[i] = 1e12;
        big.high.values[i] = 1e12;
    }
    dect::SinogramPair db = dect::simulate(big, 7);
    for (double v : db.low.values)
        CHECK(std::abs(v - 1e12) / 1e12 < 1e-5);
}

TEST_CASE("simulate rejects non-positive means") {
    dect::SinogramPair g;
    g.low = dect::Sinogram(1, 2, "L");
    g.high = dect::Sinogram(1, 2, "H");
    g.low.values = {10.0, 0.0};
    g.high.values = {10.0, 10.0};
    CHECK_THROWS_AS(dect::simulate(g, 1), dect::Error);
}

TEST_CASE("nll of d equal g equal one counts the bins") {
    dect::SinogramPair d;
    d.low = dect::Sinogram(2, 3, "L");
    d.high = dect::Sinogram(2, 3, "H");
    d.low.values.assign(6, 1.0);
    d.high.values.assign(6, 1.0);
    CHECK(dect::neg_log_likelihood(d, d) == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("single-bin nll is minimized at g equal d") {
    // x - 5 ln x has its minimum at x = 5.
    auto nll_at = [](double g) {
        dect::SinogramPair dd, gg;
        dd.low = dect::Sinogram(1, 1, "L");
        dd.high = dect::Sinogram(1, 1, "H");
        gg.low = dect::Sinogram(1, 1, "L");
        gg.high = dect::Sinogram(1, 1, "H");
        dd.low.values = {5.0};
        dd.high.values = {0.0};
        gg.low.values = {g};
        gg.high.values = {1.0};
        return dect::neg_log_likelihood(dd, gg);
    };
    double best = nll_at(5.0);
    for (double g : {3.0, 4.0, 4.9, 5.1, 6.0, 8.0})
        CHECK(nll_at(g) > best);
}

TEST_CASE("nll matches an extended-precision recomputation") {
    dect::SinogramPair d, g;
    d.low = dect::Sinogram(1, 2, "L");
    d.high = dect::Sinogram(1, 2, "H");
    g.low = dect::Sinogram(1, 2, "L");
    g.high = dect::Sinogram(1, 2, "H");
    d.low.values = {3.0, 7.0};
    d.high.values = {0.0, 12.0};
    g.low.values = {2.5, 6.0};
    g.high.values = {1.0, 15.0};
    // [DERIVED] decimal arithmetic at 50 digits gives -23.287790893445371.
    CHECK(dect::neg_log_likelihood(d, g) ==
          doctest::Approx(-23.28779089344537).epsilon(1e-14));
}

TEST_CASE("nll validates inputs") {
    dect::SinogramPair d, g;
    d.low = dect::Sinogram(1, 1, "L");
    d.high = dect::Sinogram(1, 1, "H");
    g.low = dect::Sinogram(1, 1, "L");
    g.high = dect::Sinogram(1, 1, "H");
    d.low.values = {-1.0};
    d.high.values = {1.0};
    g.low.values = {1.0};
    g.high.values = {1.0};
    CHECK_THROWS_AS(dect::neg_log_likelihood(d, g), dect::Error);
    d.low.values = {1.0};
    g.high.values = {0.0};
    CHECK_THROWS_AS(dect::neg_log_likelihood(d, g), dect::Error);
}

TEST_CASE("gradient matches central finite differences of the nll") {
    dect::ScanModel m = small_model();
    dect::BasisImage c = small_phantom_image();
    dect::SinogramPair d = dect::simulate(dect::predict(c, m), 11);

    // Evaluate at a slightly perturbed point so the gradient is not tiny.
    dect::BasisImage c0 = c;
    for (double& v : c0.channel[0])
        v *= 0.93;
    for (double& v : c0.channel[1])
        v *= 1.05;
    dect::BasisImage grad = dect::nll_gradient(c0, d, m);

    dect::SplitMix64 rng(303);
    const double eps = 1e-4;
    for (int trial = 0; trial < 6; ++trial) {
        dect::BasisImage vplus = c0;
        dect::BasisImage vminus = c0;
        double dir_dot_grad = 0.0;
        for (int ch = 0; ch < 2; ++ch)
            for (std::size_t p = 0; p < c0.pixels(); ++p) {
                double v = rng.next_double() * 2.0 - 1.0;
                vplus.channel[ch][p] += eps * v;
                vminus.channel[ch][p] -= eps * v;
                dir_dot_grad += v * grad.channel[ch][p];
            }
        double fplus = dect::neg_log_likelihood(d, dect::predict(vplus, m));
        double fminus = dect::neg_log_likelihood(d, dect::predict(vminus, m));
        double fd = (fplus - fminus) / (2.0 * eps);
        CHECK(std::abs(fd - dir_dot_grad) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
}

TEST_CASE("gradient vanishes at the 1-voxel monoenergetic optimum") {
    dect::Geometry geom;
    geom.n_angles = 1;
    geom.angles_rad = {0.0};
    geom.n_det = 1;
    geom.det_spacing_cm = 1.6;
    geom.n_x = 1;
    geom.n_y = 1;
    geom.pixel_size_cm = 1.0;
    dect::Spectrum mono;
    mono.label = "L";
    mono.energies_keV = {60.0};
    mono.fluence = {1000.0};
    dect::Spectrum mono_h = mono;
    mono_h.label = "H";
    mono_h.energies_keV = {80.0};
    dect::MaterialTable m1;
    m1.material_name = "m1";
    m1.energies_keV = {50.0, 100.0};
    m1.lac_per_cm = {0.25, 0.25};
    dect::MaterialTable m2;
    m2.material_name = "m2";
    m2.energies_keV = {50.0, 100.0};
    m2.lac_per_cm = {0.9, 0.4};
    dect::ScanModel m = dect::make_scan_model(geom, mono, mono_h, m1, m2);

    // The exact optimum has mu1 * l1 = ln(I0/d). With a unit pixel crossed
    // head-on, l1 = c1, so c1 = ln(1000/600)/0.25. The mu1 table is flat, so
    // the same c1 is the closed-form optimum of both tube settings at once.
    dect::SinogramPair d;
    d.low = dect::Sinogram(1, 1, "L");
    d.high = dect::Sinogram(1, 1, "H");
    d.low.values = {600.0};
    d.high.values = {600.0};
    dect::BasisImage c(1, 1, 1.0);
    c.channel[0][0] = std::log(1000.0 / 600.0) / 0.25;
    dect::BasisImage grad = dect::nll_gradient(c, d, m);
    CHECK(std::abs(grad.channel[0][0]) < 1e-10);
    CHECK(std::abs(grad.channel[1][0]) < 1e-10);
}

TEST_CASE("gradient scales linearly with the spectra") {
    dect::ScanModel m = small_model();
    dect::BasisImage c = small_phantom_image();
    dect::SinogramPair d = dect::simulate(dect::predict(c, m), 5);

    dect::Spectrum lo = m.spectrum_low;
    dect::Spectrum hi = m.spectrum_high;
    const double alpha = 3.0;
    for (double& v : lo.fluence)
        v *= alpha;
    for (double& v : hi.fluence)
        v *= alpha;
    dect::ScanModel ms = dect::make_scan_model(m.geometry, lo, hi, m.material1, m.material2);

    // With d held fixed, grad = At[(d/g - 1) w]; scaling I0 by alpha scales
    // g and w by alpha, so grad_scaled = alpha At[(d/(alpha g) - 1) w] =
    // At[(d/g) w] - alpha At[w]. Verify via the identity instead of blind
    // proportionality: grad_alpha - alpha grad_1 = (1 - alpha) At[(d/g) w]
    // fails; use d scaled too, which scales the gradient exactly.
    dect::SinogramPair ds = d;
    for (double& v : ds.low.values)
        v *= alpha;
    for (double& v : ds.high.values)
        v *= alpha;
    dect::BasisImage g1 = dect::nll_gradient(c, d, m);
    dect::BasisImage ga = dect::nll_gradient(c, ds, ms);
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t p = 0; p < c.pixels(); ++p)
            CHECK(ga.channel[ch][p] ==
                  doctest::Approx(alpha * g1.channel[ch][p]).epsilon(1e-11));
}

TEST_CASE("nll is convex along line segments in the basis images") {
    dect::ScanModel m = small_model();
    dect::BasisImage a = small_phantom_image();
    dect::BasisImage b = a;
    for (double& v : b.channel[0])
        v *= 0.7;
    for (double& v : b.channel[1])
        v *= 1.3;
    dect::SinogramPair d = dect::simulate(dect::predict(a, m), 21);
    // NLL is convex in l and l is linear in c, so midpoints lie below the
    // endpoint maximum (spot check, not a proof).
    auto f = [&](const dect::BasisImage& x) {
        return dect::neg_log_likelihood(d, dect::predict(x, m));
    };
    dect::BasisImage mid = a;
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t p = 0; p < a.pixels(); ++p)
            mid.channel[ch][p] = 0.5 * (a.channel[ch][p] + b.channel[ch][p]);
    CHECK(f(mid) <= std::max(f(a), f(b)) + 1e-9);
    CHECK(f(mid) <= 0.5 * (f(a) + f(b)) + 1e-9);
}

TEST_CASE("scan model construction validates spectra against table spans") {
    dect::Geometry geom = dect::make_uniform_geometry(4, 24, 0.12, 16, 16, 0.1);
    dect::Spectrum s;
    s.label = "L";
    s.energies_keV = {10.0, 60.0};  // 10 keV below the 20 keV table floor
    s.fluence = {1.0, 1.0};
    dect::MaterialTable water = dect::load_material(data_file("material_water.csv"), "water");
    dect::MaterialTable bone = dect::load_material(data_file("material_bone.csv"), "bone");
    CHECK_THROWS_AS(dect::make_scan_model(geom, s, s, water, bone), dect::Error);
}

TEST_CASE("identical spectra make the decomposition matrix singular") {
    dect::Geometry geom = dect::make_uniform_geometry(4, 24, 0.12, 16, 16, 0.1);
    // Same effective energy on both sides gives two identical rows.
    dect::Spectrum s = dect::load_spectrum(data_file("spectrum_low.csv"), "L");
    dect::Spectrum s2 = s;
    s2.label = "H";
    dect::MaterialTable water = dect::load_material(data_file("material_water.csv"), "water");
    dect::MaterialTable bone = dect::load_material(data_file("material_bone.csv"), "bone");
    CHECK_THROWS_AS(dect::make_scan_model(geom, s, s2, water, bone), dect::Error);
}

TEST_CASE("effective matrix sits at the fluence-weighted energies") {
    dect::ScanModel m = small_model();
    dect::DecompositionMatrix dm = dect::effective_matrix(m);
    CHECK(dm.energy_low_keV == doctest::Approx(dect::effective_energy(m.spectrum_low)));
    CHECK(dm.energy_high_keV == doctest::Approx(dect::effective_energy(m.spectrum_high)));
    CHECK(dm.m11 == doctest::Approx(dect::lac_at(m.material1, dm.energy_low_keV)));
    CHECK(dm.m22 == doctest::Approx(dect::lac_at(m.material2, dm.energy_high_keV)));
}
