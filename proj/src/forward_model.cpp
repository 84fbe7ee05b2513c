#include "dect/forward_model.hpp"

#include <cmath>

#include "dect/parallel.hpp"
#include "dect/rng.hpp"

namespace dect {

namespace {

void prepare_spectrum(const Spectrum& s, const MaterialTable& m1, const MaterialTable& m2,
                      ScanModel::PreparedSpectrum& out) {
    out.fluence.clear();
    out.mu1.clear();
    out.mu2.clear();
    out.total = 0.0;
    for (std::size_t b = 0; b < s.energies_keV.size(); ++b) {
        double E = s.energies_keV[b];
        if (E < m1.min_energy() || E > m1.max_energy() || E < m2.min_energy() ||
            E > m2.max_energy())
            throw Error(ErrorKind::config,
                        "scan model: spectrum '" + s.label + "' bin at " + std::to_string(E) +
                            " keV lies outside a material table span");
        if (s.fluence[b] <= 0.0)
            continue;
        out.fluence.push_back(s.fluence[b]);
        out.mu1.push_back(lac_at(m1, E));
        out.mu2.push_back(lac_at(m2, E));
        out.total += s.fluence[b];
    }
}

}  // namespace

ScanModel make_scan_model(Geometry geom, Spectrum low, Spectrum high, MaterialTable m1,
                          MaterialTable m2) {
    geom.validate();
    low.validate();
    high.validate();
    m1.validate();
    m2.validate();
    ScanModel m;
    m.geometry = std::move(geom);
    m.spectrum_low = std::move(low);
    m.spectrum_high = std::move(high);
    m.material1 = std::move(m1);
    m.material2 = std::move(m2);
    prepare_spectrum(m.spectrum_low, m.material1, m.material2, m.prepared[0]);
    prepare_spectrum(m.spectrum_high, m.material1, m.material2, m.prepared[1]);
    effective_matrix(m);  // validates decomposition conditioning up front
    return m;
}

DecompositionMatrix effective_matrix(const ScanModel& m) {
    DecompositionMatrix d;
    d.energy_low_keV = effective_energy(m.spectrum_low);
    d.energy_high_keV = effective_energy(m.spectrum_high);
    d.m11 = lac_at(m.material1, d.energy_low_keV);
    d.m12 = lac_at(m.material2, d.energy_low_keV);
    d.m21 = lac_at(m.material1, d.energy_high_keV);
    d.m22 = lac_at(m.material2, d.energy_high_keV);
    // Condition number from the singular values of the 2x2 system.
    double a = d.m11 * d.m11 + d.m12 * d.m12;
    double b = d.m21 * d.m21 + d.m22 * d.m22;
    double c = d.m11 * d.m21 + d.m12 * d.m22;
    double tr = a + b;
    double disc = std::sqrt(std::max(0.0, (a - b) * (a - b) + 4.0 * c * c));
    double smax = std::sqrt(std::max(0.0, 0.5 * (tr + disc)));
    double smin = std::sqrt(std::max(0.0, 0.5 * (tr - disc)));
    if (!(smin > 0.0) || smax / smin > 1e12)
        throw Error(ErrorKind::config,
                    "scan model: effective-energy decomposition matrix is singular "
                    "(condition > 1e12); spectra are not separable");
    return d;
}

LineIntegrals project_basis(const BasisImage& c, const ScanModel& m) {
    const Geometry& g = m.geometry;
    if (c.n_x != g.n_x || c.n_y != g.n_y)
        throw Error(ErrorKind::mismatch, "project_basis: image dims do not match geometry");
    if (std::fabs(c.pixel_size_cm - g.pixel_size_cm) >
        1e-9 * std::fabs(g.pixel_size_cm))
        throw Error(ErrorKind::mismatch, "project_basis: pixel size does not match geometry");
    LineIntegrals out;
    out.l1 = forward(c.channel[0], g);
    out.l2 = forward(c.channel[1], g);
    return out;
}

void ray_sweep(const LineIntegrals& lines, const ScanModel& m, int level, RaySweep& out) {
    const std::size_t rays = m.geometry.rays();
    lines.l1.check_geometry(m.geometry, "ray_sweep");
    lines.l2.check_geometry(m.geometry, "ray_sweep");
    for (int j = 0; j < 2; ++j) {
        out.g[j].assign(rays, 0.0);
        if (level >= 1) {
            out.w1[j].assign(rays, 0.0);
            out.w2[j].assign(rays, 0.0);
        }
        if (level >= 2) {
            out.W11[j].assign(rays, 0.0);
            out.W12[j].assign(rays, 0.0);
            out.W22[j].assign(rays, 0.0);
        }
    }
    for (int j = 0; j < 2; ++j) {
        const auto& ps = m.prepared[j];
        const std::size_t bins = ps.fluence.size();
        const double* fl = ps.fluence.data();
        const double* mu1 = ps.mu1.data();
        const double* mu2 = ps.mu2.data();
        const double* l1 = lines.l1.values.data();
        const double* l2 = lines.l2.values.data();
        const std::string& label = m.spectrum(j).label;
        parallel_for(rays, [&, j](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                double a1 = l1[r], a2 = l2[r];
                if (!std::isfinite(a1) || !std::isfinite(a2))
                    throw Error(ErrorKind::numeric,
                                "ray_sweep: non-finite line integral in spectrum '" + label +
                                    "' at ray " + std::to_string(r));
                double g = 0.0, w1 = 0.0, w2 = 0.0, W11 = 0.0, W12 = 0.0, W22 = 0.0;
                for (std::size_t b = 0; b < bins; ++b) {
                    double e = fl[b] * std::exp(-a1 * mu1[b] - a2 * mu2[b]);
                    g += e;
                    if (level >= 1) {
                        double e1 = e * mu1[b];
                        double e2 = e * mu2[b];
                        w1 += e1;
                        w2 += e2;
                        if (level >= 2) {
                            W11 += e1 * mu1[b];
                            W12 += e1 * mu2[b];
                            W22 += e2 * mu2[b];
                        }
                    }
                }
                if (!std::isfinite(g) || g <= 0.0)
                    throw Error(ErrorKind::numeric,
                                "ray_sweep: degenerate expected counts in spectrum '" + label +
                                    "' at ray " + std::to_string(r));
                out.g[j][r] = g;
                if (level >= 1) {
                    out.w1[j][r] = w1;
                    out.w2[j][r] = w2;
                }
                if (level >= 2) {
                    out.W11[j][r] = W11;
                    out.W12[j][r] = W12;
                    out.W22[j][r] = W22;
                }
            }
        });
    }
}

SinogramPair predict(const BasisImage& c, const ScanModel& m) {
    LineIntegrals lines = project_basis(c, m);
    RaySweep sweep;
    ray_sweep(lines, m, 0, sweep);
    SinogramPair out;
    out.low = Sinogram(m.geometry.n_angles, m.geometry.n_det, m.spectrum_low.label);
    out.high = Sinogram(m.geometry.n_angles, m.geometry.n_det, m.spectrum_high.label);
    out.low.values = std::move(sweep.g[0]);
    out.high.values = std::move(sweep.g[1]);
    return out;
}

SinogramPair simulate(const SinogramPair& g, std::uint64_t seed) {
    SinogramPair d;
    d.low = Sinogram(g.low.n_angles, g.low.n_det, g.low.label);
    d.high = Sinogram(g.high.n_angles, g.high.n_det, g.high.label);
    const std::size_t rays = g.low.values.size();
    for (int j = 0; j < 2; ++j) {
        const Sinogram& mean = j == 0 ? g.low : g.high;
        Sinogram& out = j == 0 ? d.low : d.high;
        const double* in = mean.values.data();
        double* val = out.values.data();
        std::uint64_t base = static_cast<std::uint64_t>(j) * rays;
        parallel_for(mean.values.size(), [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                if (!(in[r] > 0.0))
                    throw Error(ErrorKind::numeric,
                                "simulate: non-positive mean at bin " + std::to_string(r));
                val[r] = poisson_at(seed, base + r, in[r]);
            }
        });
    }
    return d;
}

namespace {

double nll_one(const Sinogram& d, const Sinogram& g) {
    if (d.values.size() != g.values.size())
        throw Error(ErrorKind::mismatch, "neg_log_likelihood: sinogram dims differ");
    double sum = 0.0;
    for (std::size_t r = 0; r < d.values.size(); ++r) {
        double gv = g.values[r], dv = d.values[r];
        if (!(gv > 0.0))
            throw Error(ErrorKind::numeric,
                        "neg_log_likelihood: non-positive prediction at bin " +
                            std::to_string(r));
        if (dv < 0.0)
            throw Error(ErrorKind::numeric,
                        "neg_log_likelihood: negative count at bin " + std::to_string(r));
        sum += gv - dv * std::log(gv);
    }
    return sum;
}

}  // namespace

double neg_log_likelihood(const SinogramPair& d, const SinogramPair& g) {
    return nll_one(d.low, g.low) + nll_one(d.high, g.high);
}

BasisImage nll_gradient(const BasisImage& c, const SinogramPair& d, const ScanModel& m) {
    d.low.check_geometry(m.geometry, "nll_gradient");
    d.high.check_geometry(m.geometry, "nll_gradient");
    LineIntegrals lines = project_basis(c, m);
    RaySweep sweep;
    ray_sweep(lines, m, 1, sweep);

    const std::size_t rays = m.geometry.rays();
    Sinogram q1(m.geometry.n_angles, m.geometry.n_det);
    Sinogram q2(m.geometry.n_angles, m.geometry.n_det);
    for (int j = 0; j < 2; ++j) {
        const double* dv = (j == 0 ? d.low : d.high).values.data();
        for (std::size_t r = 0; r < rays; ++r) {
            double rho = dv[r] / sweep.g[j][r] - 1.0;
            q1.values[r] += rho * sweep.w1[j][r];
            q2.values[r] += rho * sweep.w2[j][r];
        }
    }
    BasisImage grad(c.n_x, c.n_y, c.pixel_size_cm);
    grad.channel[0] = adjoint(q1, m.geometry);
    grad.channel[1] = adjoint(q2, m.geometry);
    return grad;
}

}  // namespace dect
