#pragma once

#include <vector>

#include "dect/forward_model.hpp"
#include "dect/phantom.hpp"
#include "dect/physics.hpp"
#include "dect/projector.hpp"

namespace dect {

// p(y) = ln(total_fluence / max(d(y), floor)); the floor keeps zero-count
// bins finite.
Sinogram log_transform(const Sinogram& d, const Spectrum& s, double floor_counts = 0.5);

enum class FilterWindow { ram_lak, hann };

// Parallel-beam filtered backprojection: frequency-domain ramp built from
// the band-limited spatial kernel, zero-padded to a power of two >= 2*n_det,
// pixel-driven backprojection scaled by pi/n_angles. Output units 1/cm.
std::vector<double> fbp(const Sinogram& p, const Geometry& geom,
                        FilterWindow window = FilterWindow::hann);

// Per-pixel solve of matrix * (c1, c2) = (mu_L, mu_H).
BasisImage image_decompose(const std::vector<double>& mu_low_img,
                           const std::vector<double>& mu_high_img,
                           const DecompositionMatrix& matrix, const Geometry& geom);

BasisImage image_decompose(const std::vector<double>& mu_low_img,
                           const std::vector<double>& mu_high_img, const ScanModel& m);

// Full analytic initialization chain: log transform, per-spectrum FBP,
// effective-energy decomposition.
BasisImage fbp_init(const SinogramPair& d, const ScanModel& m,
                    FilterWindow window = FilterWindow::hann);

}  // namespace dect
