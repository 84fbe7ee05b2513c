#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dect/forward_model.hpp"
#include "dect/phantom.hpp"
#include "dect/projector.hpp"

namespace dect {

// precomputed_bound: pixel curvature evaluated once at a reference image and
// reused (the network's DC layer). per_iterate: curvature re-evaluated at
// the current iterate every step (reference solver).
enum class CurvatureMode { precomputed_bound, per_iterate };

struct SurrogateConfig {
    CurvatureMode curvature_mode = CurvatureMode::precomputed_bound;
    bool nonnegativity = true;
    double step_scale = 1.0;

    void validate() const;
};

enum class PenaltyKind { none, quadratic_difference, huber };

struct PenaltyConfig {
    PenaltyKind kind = PenaltyKind::none;
    double weight = 0.0;      // beta
    double huber_delta = 0.1;

    void validate() const;
};

// Iterate-independent pieces of the data-consistency step: the projector row
// sums a(y) and, when curvature is held fixed, the pixel curvature at the
// reference image.
struct DcContext {
    Sinogram row_weight;
    BasisImage curvature;
    bool curvature_fixed = false;
};

// Builds the context at c_ref. In per_iterate mode only row_weight is kept.
DcContext make_dc_context(const BasisImage& c_ref, const ScanModel& m,
                          const SurrogateConfig& cfg);

// One damped Newton step on the separable quadratic surrogate of the NLL:
//   delta_i(x) = -step_scale * grad_i(x) / curv_i(x)
// with the per-pixel curvature transferred from the per-ray bound
//   kappa_i(y) = sum_j sum_E I0_j mu_i (mu_1 + mu_2) exp(-l mu)
// via curv_i(x) = At[a(y) kappa_i(y)], a = row sums of the projector.
// The bound dominates the ray Hessian for every d >= 0. With nonnegativity
// on, delta is clamped so c_prev + delta >= 0.
BasisImage dc_step(const BasisImage& c_prev, const SinogramPair& d, const ScanModel& m,
                   const SurrogateConfig& cfg);

BasisImage dc_step_cached(const BasisImage& c_prev, const SinogramPair& d,
                          const ScanModel& m, const SurrogateConfig& cfg,
                          const DcContext& ctx);

// Everything the exact backward pass through one cached-curvature DC step
// needs: the level-2 ray sweep at c_prev and the clamp decisions.
struct DcLayerState {
    LineIntegrals lines;
    RaySweep sweep;
    BasisImage delta;
    BasisImage curvature;
    std::array<std::vector<unsigned char>, 2> clamped;
    double step_scale = 1.0;
};

DcLayerState dc_step_with_state(const BasisImage& c_prev, const SinogramPair& d,
                                const ScanModel& m, const SurrogateConfig& cfg,
                                const DcContext& ctx);

// Vector-Jacobian product of the cached-mode DC step: given v = dL/d(delta),
// returns dL/d(c_prev). Treats the cached curvature as constant, which is
// exact in precomputed_bound mode. Uses the Hessian-vector product of the
// NLL assembled from the stored sweep.
BasisImage dc_step_vjp(const DcLayerState& state, const BasisImage& v,
                       const SinogramPair& d, const ScanModel& m);

// NLL plus beta * sum over 4-neighbour pairs and both channels of psi(diff).
// psi is t^2/2 (quadratic) or the Huber function.
double objective(const BasisImage& c, const SinogramPair& d, const ScanModel& m,
                 const PenaltyConfig& pen);

struct SirResult {
    BasisImage image;
    std::vector<double> trace;  // objective at init plus after every iteration
};

SirResult sir_reconstruct(const SinogramPair& d, const BasisImage& c_init,
                          const ScanModel& m, std::size_t n_iter,
                          const SurrogateConfig& cfg, const PenaltyConfig& pen);

}  // namespace dect
