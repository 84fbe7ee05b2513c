#include "dect/sir.hpp"

#include <cmath>
#include <string>

#include "dect/common.hpp"

namespace dect {

void SurrogateConfig::validate() const {
    if (!(step_scale > 0.0) || !(step_scale <= 1.0) || !std::isfinite(step_scale))
        throw Error(ErrorKind::config, "surrogate config: step_scale must lie in (0, 1]");
}

void PenaltyConfig::validate() const {
    if (!(weight >= 0.0) || !std::isfinite(weight))
        throw Error(ErrorKind::config, "penalty config: weight must be finite and >= 0");
    if (kind == PenaltyKind::huber && !(huber_delta > 0.0))
        throw Error(ErrorKind::config, "penalty config: huber_delta must be > 0");
}

namespace {

// psi, psi', and the half-quadratic weight psi'(t)/t (continuous at 0).
double psi_value(PenaltyKind k, double delta, double t) {
    if (k == PenaltyKind::quadratic_difference)
        return 0.5 * t * t;
    double a = std::fabs(t);
    if (a <= delta)
        return 0.5 * t * t;
    return delta * (a - 0.5 * delta);
}

double psi_derivative(PenaltyKind k, double delta, double t) {
    if (k == PenaltyKind::quadratic_difference)
        return t;
    if (std::fabs(t) <= delta)
        return t;
    return t > 0.0 ? delta : -delta;
}

double psi_weight(PenaltyKind k, double delta, double t) {
    if (k == PenaltyKind::quadratic_difference)
        return 1.0;
    double a = std::fabs(t);
    return a <= delta ? 1.0 : delta / a;
}

double penalty_value(const BasisImage& c, const PenaltyConfig& pen) {
    if (pen.kind == PenaltyKind::none || pen.weight == 0.0)
        return 0.0;
    double sum = 0.0;
    for (int ch = 0; ch < 2; ++ch) {
        const std::vector<double>& v = c.channel[ch];
        for (std::size_t iy = 0; iy < c.n_y; ++iy) {
            for (std::size_t ix = 0; ix < c.n_x; ++ix) {
                double here = v[iy * c.n_x + ix];
                if (ix + 1 < c.n_x)
                    sum += psi_value(pen.kind, pen.huber_delta, here - v[iy * c.n_x + ix + 1]);
                if (iy + 1 < c.n_y)
                    sum += psi_value(pen.kind, pen.huber_delta, here - v[(iy + 1) * c.n_x + ix]);
            }
        }
    }
    return pen.weight * sum;
}

// Gradient of the pair sum and the separable half-quadratic curvature bound
// 2 beta sum_neighbours psi'(diff)/diff, accumulated onto grad/curv.
void add_penalty_terms(const BasisImage& c, const PenaltyConfig& pen, BasisImage& grad,
                       BasisImage& curv) {
    if (pen.kind == PenaltyKind::none || pen.weight == 0.0)
        return;
    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(c.n_x);
    const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(c.n_y);
    for (int ch = 0; ch < 2; ++ch) {
        const std::vector<double>& v = c.channel[ch];
        std::vector<double>& g = grad.channel[ch];
        std::vector<double>& h = curv.channel[ch];
        for (std::ptrdiff_t iy = 0; iy < ny; ++iy) {
            for (std::ptrdiff_t ix = 0; ix < nx; ++ix) {
                double here = v[static_cast<std::size_t>(iy * nx + ix)];
                double gsum = 0.0, hsum = 0.0;
                const std::ptrdiff_t dx[4] = {1, -1, 0, 0};
                const std::ptrdiff_t dy[4] = {0, 0, 1, -1};
                for (int n = 0; n < 4; ++n) {
                    std::ptrdiff_t jx = ix + dx[n], jy = iy + dy[n];
                    if (jx < 0 || jx >= nx || jy < 0 || jy >= ny)
                        continue;
                    double diff = here - v[static_cast<std::size_t>(jy * nx + jx)];
                    gsum += psi_derivative(pen.kind, pen.huber_delta, diff);
                    hsum += 2.0 * psi_weight(pen.kind, pen.huber_delta, diff);
                }
                g[static_cast<std::size_t>(iy * nx + ix)] += pen.weight * gsum;
                h[static_cast<std::size_t>(iy * nx + ix)] += pen.weight * hsum;
            }
        }
    }
}

// Per-ray curvature bound kappa_i = sum_j (W_i1 + W_i2), the row sums of the
// 2x2 second-moment matrix W. For any counts d >= 0 the true ray Hessian
// H = (1 - d/g) W + (d/g^2) w w^T satisfies u^T H u <= u^T W u (Cauchy-
// Schwarz on the fluence measure), and diag(kappa) - W is diagonally
// dominant with nonnegative entries, so diag(kappa) >= H.
void ray_curvature(const RaySweep& sweep, std::size_t rays, std::vector<double>& k1,
                   std::vector<double>& k2) {
    k1.assign(rays, 0.0);
    k2.assign(rays, 0.0);
    for (int j = 0; j < 2; ++j) {
        for (std::size_t r = 0; r < rays; ++r) {
            k1[r] += sweep.W11[j][r] + sweep.W12[j][r];
            k2[r] += sweep.W12[j][r] + sweep.W22[j][r];
        }
    }
}

// Pixel transfer of the separable bound: curv_i(x) = At[a(y) kappa_i(y)]
// with a(y) the projector row sums.
BasisImage pixel_curvature(const RaySweep& sweep, const Sinogram& row_weight,
                           const ScanModel& m, std::size_t nx, std::size_t ny,
                           double pixel_cm) {
    const std::size_t rays = m.geometry.rays();
    std::vector<double> k1, k2;
    ray_curvature(sweep, rays, k1, k2);
    Sinogram s1(m.geometry.n_angles, m.geometry.n_det);
    Sinogram s2(m.geometry.n_angles, m.geometry.n_det);
    for (std::size_t r = 0; r < rays; ++r) {
        s1.values[r] = row_weight.values[r] * k1[r];
        s2.values[r] = row_weight.values[r] * k2[r];
    }
    BasisImage curv(nx, ny, pixel_cm);
    curv.channel[0] = adjoint(s1, m.geometry);
    curv.channel[1] = adjoint(s2, m.geometry);
    return curv;
}

BasisImage gradient_from_sweep(const RaySweep& sweep, const SinogramPair& d,
                               const ScanModel& m, std::size_t nx, std::size_t ny,
                               double pixel_cm) {
    const std::size_t rays = m.geometry.rays();
    Sinogram q1(m.geometry.n_angles, m.geometry.n_det);
    Sinogram q2(m.geometry.n_angles, m.geometry.n_det);
    for (int j = 0; j < 2; ++j) {
        const double* dv = (j == 0 ? d.low : d.high).values.data();
        for (std::size_t r = 0; r < rays; ++r) {
            if (dv[r] < 0.0)
                throw Error(ErrorKind::numeric,
                            "dc_step: negative count at bin " + std::to_string(r));
            double rho = dv[r] / sweep.g[j][r] - 1.0;
            q1.values[r] += rho * sweep.w1[j][r];
            q2.values[r] += rho * sweep.w2[j][r];
        }
    }
    BasisImage grad(nx, ny, pixel_cm);
    grad.channel[0] = adjoint(q1, m.geometry);
    grad.channel[1] = adjoint(q2, m.geometry);
    return grad;
}

// The damped Newton step on the separable surrogate, with the clamp applied
// per pixel. mask, when non-null, records where the clamp was active.
BasisImage apply_step(const BasisImage& c_prev, const BasisImage& grad,
                      const BasisImage& curv, const SurrogateConfig& cfg,
                      std::array<std::vector<unsigned char>, 2>* mask) {
    BasisImage delta(c_prev.n_x, c_prev.n_y, c_prev.pixel_size_cm);
    const std::size_t n = c_prev.pixels();
    for (int ch = 0; ch < 2; ++ch) {
        const double* cp = c_prev.channel[ch].data();
        const double* gp = grad.channel[ch].data();
        const double* hp = curv.channel[ch].data();
        double* out = delta.channel[ch].data();
        if (mask)
            (*mask)[ch].assign(n, 0);
        for (std::size_t p = 0; p < n; ++p) {
            if (!(hp[p] > 0.0)) {
                if (gp[p] != 0.0)
                    throw Error(ErrorKind::numeric,
                                "dc_step: zero curvature with nonzero gradient at pixel " +
                                    std::to_string(p) +
                                    " (geometry leaves the pixel uncovered)");
                out[p] = 0.0;
                continue;
            }
            double raw = -cfg.step_scale * gp[p] / hp[p];
            if (cfg.nonnegativity && cp[p] + raw < 0.0) {
                out[p] = -cp[p];
                if (mask)
                    (*mask)[ch][p] = 1;
            } else {
                out[p] = raw;
            }
        }
    }
    return delta;
}

}  // namespace

DcContext make_dc_context(const BasisImage& c_ref, const ScanModel& m,
                          const SurrogateConfig& cfg) {
    cfg.validate();
    DcContext ctx;
    ctx.row_weight = row_sums(m.geometry);
    if (cfg.curvature_mode == CurvatureMode::precomputed_bound) {
        LineIntegrals lines = project_basis(c_ref, m);
        RaySweep sweep;
        ray_sweep(lines, m, 2, sweep);
        ctx.curvature = pixel_curvature(sweep, ctx.row_weight, m, c_ref.n_x, c_ref.n_y,
                                        c_ref.pixel_size_cm);
        ctx.curvature_fixed = true;
    }
    return ctx;
}

BasisImage dc_step_cached(const BasisImage& c_prev, const SinogramPair& d,
                          const ScanModel& m, const SurrogateConfig& cfg,
                          const DcContext& ctx) {
    cfg.validate();
    d.low.check_geometry(m.geometry, "dc_step");
    d.high.check_geometry(m.geometry, "dc_step");
    LineIntegrals lines = project_basis(c_prev, m);
    RaySweep sweep;
    ray_sweep(lines, m, ctx.curvature_fixed ? 1 : 2, sweep);
    BasisImage grad =
        gradient_from_sweep(sweep, d, m, c_prev.n_x, c_prev.n_y, c_prev.pixel_size_cm);
    if (ctx.curvature_fixed) {
        c_prev.check_same_shape(ctx.curvature, "dc_step cached curvature");
        return apply_step(c_prev, grad, ctx.curvature, cfg, nullptr);
    }
    BasisImage curv = pixel_curvature(sweep, ctx.row_weight, m, c_prev.n_x, c_prev.n_y,
                                      c_prev.pixel_size_cm);
    return apply_step(c_prev, grad, curv, cfg, nullptr);
}

BasisImage dc_step(const BasisImage& c_prev, const SinogramPair& d, const ScanModel& m,
                   const SurrogateConfig& cfg) {
    // For a single step both curvature modes evaluate the bound at c_prev.
    SurrogateConfig local = cfg;
    local.curvature_mode = CurvatureMode::per_iterate;
    DcContext ctx = make_dc_context(c_prev, m, local);
    return dc_step_cached(c_prev, d, m, cfg, ctx);
}

DcLayerState dc_step_with_state(const BasisImage& c_prev, const SinogramPair& d,
                                const ScanModel& m, const SurrogateConfig& cfg,
                                const DcContext& ctx) {
    cfg.validate();
    d.low.check_geometry(m.geometry, "dc_step");
    d.high.check_geometry(m.geometry, "dc_step");
    DcLayerState st;
    st.step_scale = cfg.step_scale;
    st.lines = project_basis(c_prev, m);
    ray_sweep(st.lines, m, 2, st.sweep);
    BasisImage grad =
        gradient_from_sweep(st.sweep, d, m, c_prev.n_x, c_prev.n_y, c_prev.pixel_size_cm);
    if (ctx.curvature_fixed) {
        c_prev.check_same_shape(ctx.curvature, "dc_step cached curvature");
        st.curvature = ctx.curvature;
    } else {
        st.curvature = pixel_curvature(st.sweep, ctx.row_weight, m, c_prev.n_x, c_prev.n_y,
                                       c_prev.pixel_size_cm);
    }
    st.delta = apply_step(c_prev, grad, st.curvature, cfg, &st.clamped);
    return st;
}

BasisImage dc_step_vjp(const DcLayerState& state, const BasisImage& v,
                       const SinogramPair& d, const ScanModel& m) {
    v.check_same_shape(state.delta, "dc_step_vjp");
    const std::size_t n = v.pixels();
    const std::size_t rays = m.geometry.rays();

    // t = -s * D^{-1} (mask * v); pixels where the clamp fired or curvature
    // vanished contribute nothing through the Newton path.
    BasisImage t(v.n_x, v.n_y, v.pixel_size_cm);
    for (int ch = 0; ch < 2; ++ch) {
        const double* vp = v.channel[ch].data();
        const double* hp = state.curvature.channel[ch].data();
        const unsigned char* mk = state.clamped[ch].data();
        double* tp = t.channel[ch].data();
        for (std::size_t p = 0; p < n; ++p)
            tp[p] = (mk[p] || !(hp[p] > 0.0)) ? 0.0 : -state.step_scale * vp[p] / hp[p];
    }

    // Hessian-vector product of the NLL at c_prev applied to t, using the
    // stored level-2 sweep: for each ray and spectrum
    //   dl_i = forward(t_i)
    //   dg   = -(w_1 dl_1 + w_2 dl_2)
    //   dw_i = -(W_i1 dl_1 + W_i2 dl_2)
    //   q_i += (d/g - 1) dw_i - (d/g^2) dg w_i
    Sinogram dl1 = forward(t.channel[0], m.geometry);
    Sinogram dl2 = forward(t.channel[1], m.geometry);
    Sinogram q1(m.geometry.n_angles, m.geometry.n_det);
    Sinogram q2(m.geometry.n_angles, m.geometry.n_det);
    for (int j = 0; j < 2; ++j) {
        const double* dv = (j == 0 ? d.low : d.high).values.data();
        const RaySweep& sw = state.sweep;
        for (std::size_t r = 0; r < rays; ++r) {
            double g = sw.g[j][r];
            double w1 = sw.w1[j][r], w2 = sw.w2[j][r];
            double a1 = dl1.values[r], a2 = dl2.values[r];
            double dg = -(w1 * a1 + w2 * a2);
            double dw1 = -(sw.W11[j][r] * a1 + sw.W12[j][r] * a2);
            double dw2 = -(sw.W12[j][r] * a1 + sw.W22[j][r] * a2);
            double rho = dv[r] / g - 1.0;
            double scale = dv[r] / (g * g);
            q1.values[r] += rho * dw1 - scale * dg * w1;
            q2.values[r] += rho * dw2 - scale * dg * w2;
        }
    }
    BasisImage out(v.n_x, v.n_y, v.pixel_size_cm);
    out.channel[0] = adjoint(q1, m.geometry);
    out.channel[1] = adjoint(q2, m.geometry);

    // Clamped pixels follow delta = -c_prev exactly.
    for (int ch = 0; ch < 2; ++ch) {
        const double* vp = v.channel[ch].data();
        const unsigned char* mk = state.clamped[ch].data();
        double* op = out.channel[ch].data();
        for (std::size_t p = 0; p < n; ++p)
            if (mk[p])
                op[p] -= vp[p];
    }
    return out;
}

double objective(const BasisImage& c, const SinogramPair& d, const ScanModel& m,
                 const PenaltyConfig& pen) {
    pen.validate();
    return neg_log_likelihood(d, predict(c, m)) + penalty_value(c, pen);
}

SirResult sir_reconstruct(const SinogramPair& d, const BasisImage& c_init,
                          const ScanModel& m, std::size_t n_iter,
                          const SurrogateConfig& cfg, const PenaltyConfig& pen) {
    cfg.validate();
    pen.validate();
    if (n_iter < 1)
        throw Error(ErrorKind::config, "sir_reconstruct: n_iter must be >= 1");
    d.low.check_geometry(m.geometry, "sir_reconstruct");
    d.high.check_geometry(m.geometry, "sir_reconstruct");

    DcContext ctx = make_dc_context(c_init, m, cfg);
    SirResult res;
    res.image = c_init;
    // The constrained solve lives in the nonnegative orthant; start the trace
    // at the projection so step-to-step comparisons share the feasible set.
    if (cfg.nonnegativity)
        for (int ch = 0; ch < 2; ++ch)
            for (double& v : res.image.channel[ch])
                v = std::max(v, 0.0);
    res.trace.reserve(n_iter + 1);
    res.trace.push_back(objective(res.image, d, m, pen));

    for (std::size_t it = 0; it < n_iter; ++it) {
        LineIntegrals lines = project_basis(res.image, m);
        RaySweep sweep;
        ray_sweep(lines, m, ctx.curvature_fixed ? 1 : 2, sweep);
        BasisImage grad = gradient_from_sweep(sweep, d, m, res.image.n_x, res.image.n_y,
                                              res.image.pixel_size_cm);
        BasisImage curv = ctx.curvature_fixed
                              ? ctx.curvature
                              : pixel_curvature(sweep, ctx.row_weight, m, res.image.n_x,
                                                res.image.n_y, res.image.pixel_size_cm);
        // The penalty's half-quadratic surrogate shares the separable step:
        // its gradient and curvature just add to the data terms.
        add_penalty_terms(res.image, pen, grad, curv);
        BasisImage delta = apply_step(res.image, grad, curv, cfg, nullptr);
        for (int ch = 0; ch < 2; ++ch)
            for (std::size_t p = 0; p < res.image.pixels(); ++p)
                res.image.channel[ch][p] += delta.channel[ch][p];
        res.trace.push_back(objective(res.image, d, m, pen));
    }
    return res;
}

}  // namespace dect
