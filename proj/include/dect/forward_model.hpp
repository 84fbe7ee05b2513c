#pragma once

#include <array>
#include <cstdint>

#include "dect/phantom.hpp"
#include "dect/physics.hpp"
#include "dect/projector.hpp"

namespace dect {

// Everything needed to predict dual-energy transmission data: geometry,
// the two tube spectra, and the two basis-material LAC tables.
struct ScanModel {
    Geometry geometry;
    Spectrum spectrum_low, spectrum_high;
    MaterialTable material1, material2;

    // Per spectrum, positive-fluence bins only, with basis LACs sampled onto
    // the spectrum grid once at construction.
    struct PreparedSpectrum {
        std::vector<double> fluence, mu1, mu2;
        double total = 0.0;
    };
    std::array<PreparedSpectrum, 2> prepared;

    const Spectrum& spectrum(int j) const { return j == 0 ? spectrum_low : spectrum_high; }
};

ScanModel make_scan_model(Geometry geom, Spectrum low, Spectrum high, MaterialTable m1,
                          MaterialTable m2);

// 2x2 image-domain decomposition system at the fluence-weighted mean
// energies: rows [mu1(E_L*) mu2(E_L*); mu1(E_H*) mu2(E_H*)].
struct DecompositionMatrix {
    double m11, m12, m21, m22;
    double energy_low_keV, energy_high_keV;
};

DecompositionMatrix effective_matrix(const ScanModel& m);

struct SinogramPair {
    Sinogram low, high;
};

// Per-basis line integrals l_i = forward(c_i), in cm.
struct LineIntegrals {
    Sinogram l1, l2;
};

LineIntegrals project_basis(const BasisImage& c, const ScanModel& m);

// Per-ray energy sums at a fixed pair of line integrals, per spectrum j:
//   g    = sum_E I0_j(E) exp(-l1 mu1(E) - l2 mu2(E))      (expected counts)
//   w_i  = sum_E I0_j(E) mu_i(E) exp(...)                 (-dg/dl_i)
//   W_im = sum_E I0_j(E) mu_i(E) mu_m(E) exp(...)         (d2g/dl_i dl_m)
// Level 0 fills g; level 1 adds w; level 2 adds W.
struct RaySweep {
    std::array<std::vector<double>, 2> g, w1, w2, W11, W12, W22;
};

void ray_sweep(const LineIntegrals& lines, const ScanModel& m, int level, RaySweep& out);

// Expected counts under the polychromatic forward model; outputs are > 0.
SinogramPair predict(const BasisImage& c, const ScanModel& m);

// Poisson counts, reproducible for a given seed; the draw for each bin is
// addressed by (spectrum, bin) so partitioning cannot change it.
SinogramPair simulate(const SinogramPair& g, std::uint64_t seed);

// sum_j sum_y [g_j(y) - d_j(y) ln g_j(y)], the Poisson NLL up to the
// d-only constant.
double neg_log_likelihood(const SinogramPair& d, const SinogramPair& g);

// Gradient of neg_log_likelihood(d, predict(c)) with respect to c.
// Chain rule through the forward model, per basis i:
//   dNLL/dc_i = adjoint[ sum_j (d_j/g_j - 1) * w_{j,i} ]
// with w_{j,i}(y) = sum_E I0_j(E) mu_i(E) exp(-l1 mu1 - l2 mu2) evaluated at
// l = forward(c). Returned as a two-channel image.
BasisImage nll_gradient(const BasisImage& c, const SinogramPair& d, const ScanModel& m);

}  // namespace dect
