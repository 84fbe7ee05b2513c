#include "dect/recon_baseline.hpp"

#include <cmath>
#include <complex>

#include "dect/fft.hpp"
#include "dect/parallel.hpp"

namespace dect {

Sinogram log_transform(const Sinogram& d, const Spectrum& s, double floor_counts) {
    if (!(floor_counts > 0.0))
        throw Error(ErrorKind::config, "log_transform: floor must be positive");
    double i0 = total_fluence(s);
    Sinogram p(d.n_angles, d.n_det, d.label);
    for (std::size_t r = 0; r < d.values.size(); ++r) {
        double v = d.values[r];
        if (!std::isfinite(v) || v < 0.0)
            throw Error(ErrorKind::numeric,
                        "log_transform: invalid count at bin " + std::to_string(r));
        p.values[r] = std::log(i0 / std::max(v, floor_counts));
    }
    return p;
}

namespace {

// Transfer function of the band-limited ramp: FFT of the discrete spatial
// kernel h[0] = 1/(4 tau^2), h[n] = -1/(pi n tau)^2 for odd n, else 0.
// Using the kernel transform instead of |f| keeps the DC response exact.
std::vector<double> ramp_transfer(std::size_t m, double tau, FilterWindow window) {
    std::vector<std::complex<double>> h(m, 0.0);
    const double pi = 3.141592653589793238462643;
    h[0] = 1.0 / (4.0 * tau * tau);
    for (std::size_t n = 1; n <= m / 2; n += 2) {
        double v = -1.0 / (pi * pi * static_cast<double>(n) * static_cast<double>(n) *
                           tau * tau);
        h[n] = v;
        h[m - n] = v;  // circular layout of the symmetric kernel
    }
    fft_radix2(h, false);
    std::vector<double> transfer(m);
    for (std::size_t k = 0; k < m; ++k) {
        double H = h[k].real();  // even real kernel: transform is real
        if (window == FilterWindow::hann) {
            // Frequency index folded to [0, m/2].
            double f = static_cast<double>(k <= m / 2 ? k : m - k) /
                       static_cast<double>(m / 2);
            H *= 0.5 * (1.0 + std::cos(pi * f));
        }
        transfer[k] = H;
    }
    return transfer;
}

}  // namespace

std::vector<double> fbp(const Sinogram& p, const Geometry& geom, FilterWindow window) {
    geom.validate();
    p.check_geometry(geom, "fbp");
    const std::size_t nd = geom.n_det;
    const std::size_t m = next_pow2(2 * nd);
    const double tau = geom.det_spacing_cm;
    std::vector<double> transfer = ramp_transfer(m, tau, window);

    // Filter every view: Q = tau * IFFT(FFT(pad(p)) .* transfer).
    std::vector<double> filtered(geom.rays(), 0.0);
    parallel_for(geom.n_angles, [&](std::size_t begin, std::size_t end) {
        std::vector<std::complex<double>> buf(m);
        for (std::size_t ia = begin; ia < end; ++ia) {
            for (std::size_t k = 0; k < m; ++k)
                buf[k] = k < nd ? p.values[ia * nd + k] : 0.0;
            fft_radix2(buf, false);
            for (std::size_t k = 0; k < m; ++k)
                buf[k] *= transfer[k];
            fft_radix2(buf, true);
            for (std::size_t k = 0; k < nd; ++k)
                filtered[ia * nd + k] = tau * buf[k].real();
        }
    });

    // Pixel-driven backprojection with linear detector interpolation.
    std::vector<double> img(geom.pixels(), 0.0);
    const double h = geom.pixel_size_cm;
    const double cx = (static_cast<double>(geom.n_x) - 1.0) / 2.0;
    const double cy = (static_cast<double>(geom.n_y) - 1.0) / 2.0;
    const double dc = (static_cast<double>(nd) - 1.0) / 2.0;
    const double scale = 3.141592653589793238462643 / static_cast<double>(geom.n_angles);
    parallel_for(geom.pixels(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t pix = begin; pix < end; ++pix) {
            std::size_t iy = pix / geom.n_x;
            std::size_t ix = pix % geom.n_x;
            double x = (static_cast<double>(ix) - cx) * h;
            double y = (static_cast<double>(iy) - cy) * h;
            double acc = 0.0;
            for (std::size_t ia = 0; ia < geom.n_angles; ++ia) {
                double a = geom.angles_rad[ia];
                double t = x * std::cos(a) + y * std::sin(a);
                double u = t / tau + dc;
                double fl = std::floor(u);
                if (fl < 0.0 || fl >= static_cast<double>(nd) - 1.0) {
                    // Edge bins contribute without a right neighbour.
                    if (fl == static_cast<double>(nd) - 1.0 && u == fl)
                        acc += filtered[ia * nd + (nd - 1)];
                    continue;
                }
                std::size_t i0 = static_cast<std::size_t>(fl);
                double w = u - fl;
                acc += (1.0 - w) * filtered[ia * nd + i0] +
                       w * filtered[ia * nd + i0 + 1];
            }
            img[pix] = scale * acc;
        }
    });
    return img;
}

BasisImage image_decompose(const std::vector<double>& mu_low_img,
                           const std::vector<double>& mu_high_img,
                           const DecompositionMatrix& matrix, const Geometry& geom) {
    if (mu_low_img.size() != geom.pixels() || mu_high_img.size() != geom.pixels())
        throw Error(ErrorKind::mismatch, "image_decompose: image dims do not match geometry");
    double det = matrix.m11 * matrix.m22 - matrix.m12 * matrix.m21;
    if (det == 0.0)
        throw Error(ErrorKind::numeric, "image_decompose: singular decomposition matrix");
    BasisImage c(geom.n_x, geom.n_y, geom.pixel_size_cm);
    for (std::size_t p = 0; p < geom.pixels(); ++p) {
        double muL = mu_low_img[p];
        double muH = mu_high_img[p];
        c.channel[0][p] = (matrix.m22 * muL - matrix.m12 * muH) / det;
        c.channel[1][p] = (matrix.m11 * muH - matrix.m21 * muL) / det;
    }
    return c;
}

BasisImage image_decompose(const std::vector<double>& mu_low_img,
                           const std::vector<double>& mu_high_img, const ScanModel& m) {
    return image_decompose(mu_low_img, mu_high_img, effective_matrix(m), m.geometry);
}

BasisImage fbp_init(const SinogramPair& d, const ScanModel& m, FilterWindow window) {
    Sinogram pl = log_transform(d.low, m.spectrum_low);
    Sinogram ph = log_transform(d.high, m.spectrum_high);
    std::vector<double> mu_low = fbp(pl, m.geometry, window);
    std::vector<double> mu_high = fbp(ph, m.geometry, window);
    return image_decompose(mu_low, mu_high, m);
}

}  // namespace dect
