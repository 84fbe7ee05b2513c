#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "dect/common.hpp"
#include "dect/physics.hpp"
#include "dect/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string data_file(const std::string& name) {
    return std::string(DECT_SOURCE_ROOT) + "/data/" + name;
}

fs::path temp_dir() {
    fs::path d = fs::temp_directory_path() / "dect_physics_tests";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("lac_at interpolates linearly and hits nodes exactly") {
    dect::MaterialTable t;
    t.material_name = "toy";
    t.energies_keV = {10.0, 20.0};
    t.lac_per_cm = {1.0, 3.0};
    t.validate();
    CHECK(dect::lac_at(t, 15.0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(dect::lac_at(t, 10.0) == 1.0);
    CHECK(dect::lac_at(t, 20.0) == 3.0);
    CHECK(dect::lac_at(t, 12.5) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("lac_at refuses extrapolation") {
    dect::MaterialTable t;
    t.material_name = "toy";
    t.energies_keV = {10.0, 20.0};
    t.lac_per_cm = {1.0, 3.0};
    CHECK_THROWS_AS(dect::lac_at(t, 9.999), dect::Error);
    CHECK_THROWS_AS(dect::lac_at(t, 20.001), dect::Error);
    try {
        dect::lac_at(t, 5.0);
    } catch (const dect::Error& e) {
        CHECK(e.kind() == dect::ErrorKind::mismatch);
    }
}

TEST_CASE("lac_at is monotone between nodes of a monotone segment") {
    dect::MaterialTable t;
    t.material_name = "toy";
    t.energies_keV = {20.0, 40.0, 80.0};
    t.lac_per_cm = {0.8, 0.3, 0.2};
    double prev = dect::lac_at(t, 20.0);
    for (double e = 20.5; e <= 80.0; e += 0.5) {
        double v = dect::lac_at(t, e);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("shipped water table matches the published 60 keV attenuation") {
    dect::MaterialTable water = dect::load_material(data_file("material_water.csv"), "water");
    // [DERIVED] NIST liquid-water mass attenuation at 60 keV is 0.2059 cm^2/g;
    // at unit density the LAC matches within 1%.
    CHECK(dect::lac_at(water, 60.0) == doctest::Approx(0.2059).epsilon(0.01));
    CHECK(water.min_energy() == 20.0);
    CHECK(water.max_energy() == 150.0);
    CHECK(water.energies_keV.size() == 131);
}

TEST_CASE("shipped bone table is denser than water everywhere") {
    dect::MaterialTable water = dect::load_material(data_file("material_water.csv"), "water");
    dect::MaterialTable bone = dect::load_material(data_file("material_bone.csv"), "bone");
    for (double e = 20.0; e <= 150.0; e += 1.0)
        CHECK(dect::lac_at(bone, e) > dect::lac_at(water, e));
}

TEST_CASE("shipped spectra are valid and normalized") {
    dect::Spectrum lo = dect::load_spectrum(data_file("spectrum_low.csv"), "L");
    dect::Spectrum hi = dect::load_spectrum(data_file("spectrum_high.csv"), "H");
    CHECK(dect::total_fluence(lo) == doctest::Approx(1e5).epsilon(1e-9));
    CHECK(dect::total_fluence(hi) == doctest::Approx(1e5).epsilon(1e-9));
    // The high tube reaches beyond the low tube's endpoint energy.
    CHECK(dect::effective_energy(hi) > dect::effective_energy(lo) + 10.0);
    // Bins at and above each tube potential hold no photons.
    for (std::size_t i = 0; i < lo.energies_keV.size(); ++i)
        if (lo.energies_keV[i] >= 90.0)
            CHECK(lo.fluence[i] == 0.0);
}

TEST_CASE("spectrum and material validation reject malformed tables") {
    dect::Spectrum s;
    s.label = "L";
    s.energies_keV = {20.0, 20.0};
    s.fluence = {1.0, 1.0};
    CHECK_THROWS_WITH_AS(s.validate(),
                         doctest::Contains("non-increasing"), dect::Error);

    s.energies_keV = {20.0, 30.0};
    s.fluence = {-1.0, 1.0};
    CHECK_THROWS_WITH_AS(s.validate(),
                         doctest::Contains("negative fluence"), dect::Error);

    s.fluence = {0.0, 0.0};
    CHECK_THROWS_AS(s.validate(), dect::Error);

    dect::MaterialTable m;
    m.material_name = "bad";
    m.energies_keV = {20.0, 30.0};
    m.lac_per_cm = {0.5, 0.0};
    CHECK_THROWS_WITH_AS(m.validate(),
                         doctest::Contains("positive"), dect::Error);
}

TEST_CASE("loaders reject empty files with a distinct error") {
    fs::path p = temp_dir() / "empty.csv";
    std::ofstream(p) << "# only a comment\n";
    CHECK_THROWS_AS(dect::load_spectrum(p.string(), "L"), dect::Error);
}

TEST_CASE("save then load reproduces a table to full precision") {
    dect::MaterialTable bone = dect::load_material(data_file("material_bone.csv"), "bone");
    fs::path p = temp_dir() / "bone_echo.csv";
    dect::save_material(p.string(), bone);
    dect::MaterialTable again = dect::load_material(p.string(), "bone");
    REQUIRE(again.energies_keV.size() == bone.energies_keV.size());
    for (std::size_t i = 0; i < bone.energies_keV.size(); ++i) {
        CHECK(again.energies_keV[i] == bone.energies_keV[i]);
        CHECK(again.lac_per_cm[i] == bone.lac_per_cm[i]);
    }

    dect::Spectrum lo = dect::load_spectrum(data_file("spectrum_low.csv"), "L");
    fs::path q = temp_dir() / "lo_echo.csv";
    dect::save_spectrum(q.string(), lo);
    dect::Spectrum lo2 = dect::load_spectrum(q.string(), "L");
    for (std::size_t i = 0; i < lo.fluence.size(); ++i)
        CHECK(lo2.fluence[i] == lo.fluence[i]);
}

TEST_CASE("total_fluence matches a compensated summation oracle") {
    dect::Spectrum s;
    s.label = "L";
    dect::SplitMix64 rng(314159);
    for (int i = 0; i < 50; ++i) {
        s.energies_keV.push_back(20.0 + i);
        s.fluence.push_back(rng.next_double() * 1e6);
    }
    // Kahan compensated sum as the independent oracle.
    double sum = 0.0;
    double comp = 0.0;
    for (double v : s.fluence) {
        double y = v - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    CHECK(dect::total_fluence(s) == doctest::Approx(sum).epsilon(1e-13));

    dect::Spectrum tiny;
    tiny.label = "H";
    tiny.energies_keV = {40.0, 50.0, 60.0};
    tiny.fluence = {100.0, 200.0, 300.0};
    CHECK(dect::total_fluence(tiny) == 600.0);
    dect::Spectrum one;
    one.label = "H";
    one.energies_keV = {70.0};
    one.fluence = {1000.0};
    CHECK(dect::total_fluence(one) == 1000.0);
}

TEST_CASE("effective_energy is the fluence-weighted mean") {
    dect::Spectrum s;
    s.label = "L";
    s.energies_keV = {40.0, 60.0};
    s.fluence = {1.0, 3.0};
    CHECK(dect::effective_energy(s) == doctest::Approx(55.0).epsilon(1e-14));
}
