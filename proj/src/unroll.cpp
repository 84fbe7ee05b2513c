#include "dect/unroll.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dect/parallel.hpp"
#include "dect/rng.hpp"
#include "dect/sha256.hpp"
#include "dect/tensor.hpp"

namespace dect {

void MixerConfig::validate() const {
    if (features == 0 || groups == 0 || kernel == 0)
        throw Error(ErrorKind::config, "mixer config: features, groups, kernel must be >= 1");
    if (kernel % 2 == 0)
        throw Error(ErrorKind::config, "mixer config: kernel must be odd for same padding");
    if (features % groups != 0)
        throw Error(ErrorKind::config, "mixer config: groups must divide features");
}

void TrainConfig::validate() const {
    if (epochs == 0)
        throw Error(ErrorKind::config, "train config: epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error(ErrorKind::config, "train config: learning_rate must be > 0");
    if (batch_size == 0)
        throw Error(ErrorKind::config, "train config: batch_size must be >= 1");
    if (!(supervision_fraction > 0.0) || supervision_fraction > 1.0)
        throw Error(ErrorKind::config, "train config: supervision_fraction must be in (0, 1]");
    if (!(clip_norm > 0.0))
        throw Error(ErrorKind::config, "train config: clip_norm must be > 0");
}

namespace {

// Canonical array order; drives init, clipping, updates, and serialization.
template <typename Params, typename Fn>
void visit_arrays(Params& p, Fn&& fn) {
    fn("conv1/weight", p.conv1.weight);
    fn("conv1/bias", p.conv1.bias);
    fn("norm1/scale", p.norm1.scale);
    fn("norm1/shift", p.norm1.shift);
    fn("conv2/weight", p.conv2.weight);
    fn("conv2/bias", p.conv2.bias);
    fn("norm2/scale", p.norm2.scale);
    fn("norm2/shift", p.norm2.shift);
    fn("conv3/weight", p.conv3.weight);
    fn("conv3/bias", p.conv3.bias);
}

ConvParams make_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    ConvParams c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel = k;
    c.weight.assign(out_ch * in_ch * k * k, 0.0);
    c.bias.assign(out_ch, 0.0);
    return c;
}

void check_params(const MixerParams& p) {
    p.config.validate();
    const std::size_t F = p.config.features, k = p.config.kernel;
    auto conv_ok = [&](const ConvParams& c, std::size_t in, std::size_t out) {
        return c.in_ch == in && c.out_ch == out && c.kernel == k &&
               c.weight.size() == out * in * k * k && c.bias.size() == out;
    };
    if (!conv_ok(p.conv1, 4, F) || !conv_ok(p.conv2, F, F) || !conv_ok(p.conv3, F, 2) ||
        p.norm1.scale.size() != F || p.norm1.shift.size() != F ||
        p.norm2.scale.size() != F || p.norm2.shift.size() != F)
        throw Error(ErrorKind::mismatch, "mixer: parameter shapes do not match the config");
}

void check_finite(const FeatureMap& f, const char* layer) {
    for (double v : f.v)
        if (!std::isfinite(v))
            throw Error(ErrorKind::numeric,
                        std::string("mixer ") + layer + ": non-finite activation");
}

// out[o] = bias[o] + sum_i w[o][i] * in[i], zero-padded same. Shift-and-
// accumulate form: every kernel tap is one strided pass over the plane.
void conv_forward(const FeatureMap& in, const ConvParams& c, FeatureMap& out) {
    const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(in.n_y);
    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(in.n_x);
    const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(c.kernel);
    const std::ptrdiff_t p = k / 2;
    out = FeatureMap(c.out_ch, in.n_y, in.n_x);
    parallel_for(c.out_ch, [&](std::size_t begin, std::size_t end) {
        for (std::size_t o = begin; o < end; ++o) {
            double* op = out.channel(o);
            const double b = c.bias[o];
            for (std::ptrdiff_t q = 0; q < ny * nx; ++q)
                op[q] = b;
            for (std::size_t i = 0; i < c.in_ch; ++i) {
                const double* ip = in.channel(i);
                const double* w = c.weight.data() + ((o * c.in_ch + i) * c.kernel) * c.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - p;
                    const std::ptrdiff_t y_lo = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y_hi = std::min(ny, ny - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - p;
                        const double wv = w[ky * k + kx];
                        if (wv == 0.0)
                            continue;
                        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x_hi = std::min(nx, nx - dx);
                        for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
                            double* orow = op + y * nx;
                            const double* irow = ip + (y + dy) * nx + dx;
                            for (std::ptrdiff_t x = x_lo; x < x_hi; ++x)
                                orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    });
}

// din[i] = sum_o w[o][i] correlated against dout with mirrored shifts.
void conv_backward_input(const FeatureMap& dout, const ConvParams& c, FeatureMap& din) {
    const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(dout.n_y);
    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(dout.n_x);
    const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(c.kernel);
    const std::ptrdiff_t p = k / 2;
    din = FeatureMap(c.in_ch, dout.n_y, dout.n_x);
    parallel_for(c.in_ch, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double* dp = din.channel(i);
            for (std::size_t o = 0; o < c.out_ch; ++o) {
                const double* gp = dout.channel(o);
                const double* w = c.weight.data() + ((o * c.in_ch + i) * c.kernel) * c.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = p - ky;  // mirrored
                    const std::ptrdiff_t y_lo = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y_hi = std::min(ny, ny - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = p - kx;
                        const double wv = w[ky * k + kx];
                        if (wv == 0.0)
                            continue;
                        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x_hi = std::min(nx, nx - dx);
                        for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
                            double* drow = dp + y * nx;
                            const double* grow = gp + (y + dy) * nx + dx;
                            for (std::ptrdiff_t x = x_lo; x < x_hi; ++x)
                                drow[x] += wv * grow[x];
                        }
                    }
                }
            }
        }
    });
}

void conv_backward_params(const FeatureMap& in, const FeatureMap& dout, const ConvParams& c,
                          ConvParams& grad, double scale) {
    const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(in.n_y);
    const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(in.n_x);
    const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(c.kernel);
    const std::ptrdiff_t p = k / 2;
    parallel_for(c.out_ch, [&](std::size_t begin, std::size_t end) {
        for (std::size_t o = begin; o < end; ++o) {
            const double* gp = dout.channel(o);
            double bsum = 0.0;
            for (std::ptrdiff_t q = 0; q < ny * nx; ++q)
                bsum += gp[q];
            grad.bias[o] += scale * bsum;
            for (std::size_t i = 0; i < c.in_ch; ++i) {
                const double* ip = in.channel(i);
                double* gw = grad.weight.data() + ((o * c.in_ch + i) * c.kernel) * c.kernel;
                for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t dy = ky - p;
                    const std::ptrdiff_t y_lo = std::max<std::ptrdiff_t>(0, -dy);
                    const std::ptrdiff_t y_hi = std::min(ny, ny - dy);
                    for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                        const std::ptrdiff_t dx = kx - p;
                        const std::ptrdiff_t x_lo = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t x_hi = std::min(nx, nx - dx);
                        double s = 0.0;
                        for (std::ptrdiff_t y = y_lo; y < y_hi; ++y) {
                            const double* grow = gp + y * nx;
                            const double* irow = ip + (y + dy) * nx + dx;
                            for (std::ptrdiff_t x = x_lo; x < x_hi; ++x)
                                s += grow[x] * irow[x];
                        }
                        gw[ky * k + kx] += scale * s;
                    }
                }
            }
        }
    });
}

// Normalizes each channel group to zero mean / unit variance, then applies
// the per-channel affine. h keeps the pre-affine normalized values.
void group_norm_forward(const FeatureMap& a, const NormParams& n, std::size_t groups,
                        FeatureMap& h, FeatureMap& z, std::vector<double>& inv_std) {
    const std::size_t F = a.channels;
    const std::size_t plane = a.plane();
    const std::size_t per = F / groups;
    h = FeatureMap(F, a.n_y, a.n_x);
    z = FeatureMap(F, a.n_y, a.n_x);
    inv_std.assign(groups, 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
        const double* base = a.v.data() + g * per * plane;
        const std::size_t m = per * plane;
        double mean = 0.0;
        for (std::size_t q = 0; q < m; ++q)
            mean += base[q];
        mean /= double(m);
        double var = 0.0;
        for (std::size_t q = 0; q < m; ++q) {
            double t = base[q] - mean;
            var += t * t;
        }
        var /= double(m);
        const double is = 1.0 / std::sqrt(var + kGroupNormEpsilon);
        inv_std[g] = is;
        for (std::size_t c = 0; c < per; ++c) {
            const std::size_t ch = g * per + c;
            const double* ap = a.channel(ch);
            double* hp = h.channel(ch);
            double* zp = z.channel(ch);
            const double sc = n.scale[ch], sh = n.shift[ch];
            for (std::size_t q = 0; q < plane; ++q) {
                double t = (ap[q] - mean) * is;
                hp[q] = t;
                zp[q] = sc * t + sh;
            }
        }
    }
}

void group_norm_backward(const FeatureMap& h, const std::vector<double>& inv_std,
                         const NormParams& n, std::size_t groups, const FeatureMap& dz,
                         NormParams& grad, double scale, FeatureMap& da) {
    const std::size_t F = h.channels;
    const std::size_t plane = h.plane();
    const std::size_t per = F / groups;
    da = FeatureMap(F, h.n_y, h.n_x);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t m = per * plane;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t c = 0; c < per; ++c) {
            const std::size_t ch = g * per + c;
            const double* hp = h.channel(ch);
            const double* dzp = dz.channel(ch);
            double dg = 0.0, db = 0.0;
            const double sc = n.scale[ch];
            for (std::size_t q = 0; q < plane; ++q) {
                dg += dzp[q] * hp[q];
                db += dzp[q];
                const double dh = dzp[q] * sc;
                s1 += dh;
                s2 += dh * hp[q];
            }
            grad.scale[ch] += scale * dg;
            grad.shift[ch] += scale * db;
        }
        const double is = inv_std[g];
        const double inv_m = 1.0 / double(m);
        for (std::size_t c = 0; c < per; ++c) {
            const std::size_t ch = g * per + c;
            const double* hp = h.channel(ch);
            const double* dzp = dz.channel(ch);
            double* dap = da.channel(ch);
            const double sc = n.scale[ch];
            for (std::size_t q = 0; q < plane; ++q) {
                const double dh = dzp[q] * sc;
                dap[q] = is * (dh - s1 * inv_m - hp[q] * s2 * inv_m);
            }
        }
    }
}

void relu_forward(const FeatureMap& z, FeatureMap& r) {
    r = FeatureMap(z.channels, z.n_y, z.n_x);
    for (std::size_t q = 0; q < z.v.size(); ++q)
        r.v[q] = z.v[q] > 0.0 ? z.v[q] : 0.0;
}

void relu_backward(const FeatureMap& z, const FeatureMap& dr, FeatureMap& dz) {
    dz = FeatureMap(z.channels, z.n_y, z.n_x);
    for (std::size_t q = 0; q < z.v.size(); ++q)
        dz.v[q] = z.v[q] > 0.0 ? dr.v[q] : 0.0;
}

FeatureMap stack_input(const BasisImage& delta, const BasisImage& c) {
    FeatureMap x(4, c.n_y, c.n_x);
    const std::size_t plane = c.pixels();
    std::memcpy(x.channel(0), delta.channel[0].data(), plane * sizeof(double));
    std::memcpy(x.channel(1), delta.channel[1].data(), plane * sizeof(double));
    std::memcpy(x.channel(2), c.channel[0].data(), plane * sizeof(double));
    std::memcpy(x.channel(3), c.channel[1].data(), plane * sizeof(double));
    return x;
}

}  // namespace

FeatureMap conv2d_same(const FeatureMap& x, const ConvParams& c) {
    if (c.in_ch != x.channels || c.kernel == 0 || c.kernel % 2 == 0 ||
        c.weight.size() != c.out_ch * c.in_ch * c.kernel * c.kernel ||
        c.bias.size() != c.out_ch)
        throw Error(ErrorKind::mismatch, "conv2d: kernel shape does not match the input");
    FeatureMap out;
    conv_forward(x, c, out);
    return out;
}

std::size_t MixerParams::parameter_count() const {
    std::size_t n = 0;
    visit_arrays(*this, [&](const char*, const std::vector<double>& a) { n += a.size(); });
    return n;
}

MixerParams init_mixer(const MixerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MixerParams p;
    p.config = cfg;
    const std::size_t F = cfg.features, k = cfg.kernel;
    p.conv1 = make_conv(4, F, k);
    p.conv2 = make_conv(F, F, k);
    p.conv3 = make_conv(F, 2, k);
    p.norm1.scale.assign(F, 1.0);
    p.norm1.shift.assign(F, 0.0);
    p.norm2.scale.assign(F, 1.0);
    p.norm2.shift.assign(F, 0.0);

    // He-normal fan-in scaling for the two hidden convs; conv3 stays zero so
    // the block starts as the identity.
    auto fill = [&](ConvParams& c, std::uint64_t stream) {
        SplitMix64 rng(split_stream(seed, stream));
        const double std_dev = std::sqrt(2.0 / double(c.in_ch * c.kernel * c.kernel));
        for (double& w : c.weight)
            w = std_dev * rng.next_normal();
    };
    fill(p.conv1, 1);
    fill(p.conv2, 2);
    return p;
}

FeatureMap mixer_forward(const FeatureMap& x, const MixerParams& p, MixerTape* tape) {
    check_params(p);
    if (x.channels != 4 || x.n_y == 0 || x.n_x == 0 || x.v.size() != 4 * x.plane())
        throw Error(ErrorKind::mismatch, "mixer: input must be a 4-channel image");
    check_finite(x, "input");

    MixerTape local;
    MixerTape& t = tape ? *tape : local;
    t.x0 = x;

    FeatureMap a1;
    conv_forward(x, p.conv1, a1);
    check_finite(a1, "conv1");
    group_norm_forward(a1, p.norm1, p.config.groups, t.h1, t.z1, t.inv_std1);
    check_finite(t.z1, "norm1");
    relu_forward(t.z1, t.r1);

    FeatureMap a2;
    conv_forward(t.r1, p.conv2, a2);
    check_finite(a2, "conv2");
    group_norm_forward(a2, p.norm2, p.config.groups, t.h2, t.z2, t.inv_std2);
    check_finite(t.z2, "norm2");
    relu_forward(t.z2, t.r2);

    FeatureMap out;
    conv_forward(t.r2, p.conv3, out);
    check_finite(out, "conv3");
    return out;
}

MixerGrads zero_grads(const MixerParams& p) {
    MixerGrads g;
    g.conv1 = make_conv(p.conv1.in_ch, p.conv1.out_ch, p.conv1.kernel);
    g.conv2 = make_conv(p.conv2.in_ch, p.conv2.out_ch, p.conv2.kernel);
    g.conv3 = make_conv(p.conv3.in_ch, p.conv3.out_ch, p.conv3.kernel);
    g.norm1.scale.assign(p.norm1.scale.size(), 0.0);
    g.norm1.shift.assign(p.norm1.shift.size(), 0.0);
    g.norm2.scale.assign(p.norm2.scale.size(), 0.0);
    g.norm2.shift.assign(p.norm2.shift.size(), 0.0);
    return g;
}

FeatureMap mixer_backward(const MixerTape& t, const MixerParams& p, const FeatureMap& dout,
                          MixerGrads& g, double scale) {
    check_params(p);
    if (dout.channels != 2 || dout.n_y != t.x0.n_y || dout.n_x != t.x0.n_x)
        throw Error(ErrorKind::mismatch, "mixer backward: output gradient shape mismatch");
    if (t.r2.channels != p.config.features)
        throw Error(ErrorKind::mismatch, "mixer backward: tape does not match parameters");

    FeatureMap dr2;
    conv_backward_input(dout, p.conv3, dr2);
    conv_backward_params(t.r2, dout, p.conv3, g.conv3, scale);

    FeatureMap dz2;
    relu_backward(t.z2, dr2, dz2);
    FeatureMap da2;
    group_norm_backward(t.h2, t.inv_std2, p.norm2, p.config.groups, dz2, g.norm2, scale, da2);

    FeatureMap dr1;
    conv_backward_input(da2, p.conv2, dr1);
    conv_backward_params(t.r1, da2, p.conv2, g.conv2, scale);

    FeatureMap dz1;
    relu_backward(t.z1, dr1, dz1);
    FeatureMap da1;
    group_norm_backward(t.h1, t.inv_std1, p.norm1, p.config.groups, dz1, g.norm1, scale, da1);

    FeatureMap dx;
    conv_backward_input(da1, p.conv1, dx);
    conv_backward_params(t.x0, da1, p.conv1, g.conv1, scale);
    return dx;
}

UnrolledNet init_net(std::size_t n_blocks, const MixerConfig& mixer,
                     const SurrogateConfig& surrogate, std::uint64_t seed) {
    if (n_blocks == 0)
        throw Error(ErrorKind::config, "unrolled net: need at least one block");
    mixer.validate();
    surrogate.validate();
    UnrolledNet net;
    net.mixer = mixer;
    net.surrogate = surrogate;
    net.blocks.reserve(n_blocks);
    for (std::size_t k = 0; k < n_blocks; ++k)
        net.blocks.push_back(init_mixer(mixer, split_stream(seed, 7000 + k)));
    return net;
}

BasisImage block_apply(const BasisImage& c_prev, const SinogramPair& d, const ScanModel& m,
                       const MixerParams& blk, const SurrogateConfig& cfg,
                       const DcContext& ctx) {
    BasisImage delta = dc_step_cached(c_prev, d, m, cfg, ctx);
    FeatureMap x = stack_input(delta, c_prev);
    FeatureMap mix = mixer_forward(x, blk);
    BasisImage out = c_prev;
    const std::size_t plane = c_prev.pixels();
    for (int ch = 0; ch < 2; ++ch) {
        const double* mp = mix.channel(ch);
        double* op = out.channel[ch].data();
        for (std::size_t q = 0; q < plane; ++q)
            op[q] += mp[q];
    }
    return out;
}

InferResult infer(const SinogramPair& d, const BasisImage& c_init, const UnrolledNet& net,
                  const ScanModel& m) {
    if (net.blocks.empty())
        throw Error(ErrorKind::config, "infer: net has no blocks");
    DcContext ctx = make_dc_context(c_init, m, net.surrogate);
    InferResult res;
    res.intermediates.reserve(net.blocks.size());
    BasisImage c = c_init;
    for (const MixerParams& blk : net.blocks) {
        c = block_apply(c, d, m, blk, net.surrogate, ctx);
        res.intermediates.push_back(c);
    }
    res.output = c;
    return res;
}

BasisImage block_apply_traced(const BasisImage& c_prev, const SinogramPair& d,
                              const ScanModel& m, const MixerParams& blk,
                              const SurrogateConfig& cfg, const DcContext& ctx,
                              BlockTape& tape) {
    tape.input = c_prev;
    tape.dc = dc_step_with_state(c_prev, d, m, cfg, ctx);
    FeatureMap x = stack_input(tape.dc.delta, c_prev);
    FeatureMap mix = mixer_forward(x, blk, &tape.mixer);
    tape.output = c_prev;
    const std::size_t plane = c_prev.pixels();
    for (int ch = 0; ch < 2; ++ch) {
        const double* mp = mix.channel(ch);
        double* op = tape.output.channel[ch].data();
        for (std::size_t q = 0; q < plane; ++q)
            op[q] += mp[q];
    }
    return tape.output;
}

// The mixer input gradient splits into the DC branch (through the frozen
// curvature, via the vjp) and the direct stacked copy of c_prev; the
// residual path adds dout unchanged.
BasisImage block_backward(const BlockTape& tape, const BasisImage& dout,
                          const SinogramPair& d, const ScanModel& m, const MixerParams& blk,
                          MixerGrads& grads, double scale) {
    const std::size_t plane = tape.input.pixels();
    FeatureMap dmix(2, tape.input.n_y, tape.input.n_x);
    std::memcpy(dmix.channel(0), dout.channel[0].data(), plane * sizeof(double));
    std::memcpy(dmix.channel(1), dout.channel[1].data(), plane * sizeof(double));
    FeatureMap dx = mixer_backward(tape.mixer, blk, dmix, grads, scale);

    BasisImage ddelta(tape.input.n_x, tape.input.n_y, tape.input.pixel_size_cm);
    std::memcpy(ddelta.channel[0].data(), dx.channel(0), plane * sizeof(double));
    std::memcpy(ddelta.channel[1].data(), dx.channel(1), plane * sizeof(double));
    BasisImage through_dc = dc_step_vjp(tape.dc, ddelta, d, m);

    BasisImage din = dout;
    for (int ch = 0; ch < 2; ++ch) {
        const double* sp = dx.channel(2 + ch);
        const double* tp = through_dc.channel[ch].data();
        double* ip = din.channel[ch].data();
        for (std::size_t q = 0; q < plane; ++q)
            ip[q] += sp[q] + tp[q];
    }
    return din;
}

namespace {

double l2_error(const BasisImage& a, const BasisImage& b) {
    double s = 0.0;
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t q = 0; q < a.pixels(); ++q) {
            double t = a.channel[ch][q] - b.channel[ch][q];
            s += t * t;
        }
    return std::sqrt(s);
}

// d||c - t||/dc = (c - t)/||c - t||; zero residual contributes nothing.
void add_norm_gradient(const BasisImage& c, const BasisImage& t, double weight,
                       BasisImage& acc) {
    double nrm = l2_error(c, t);
    if (nrm == 0.0 || weight == 0.0)
        return;
    const double s = weight / nrm;
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t q = 0; q < c.pixels(); ++q)
            acc.channel[ch][q] += s * (c.channel[ch][q] - t.channel[ch][q]);
}

double grads_squared_norm(const std::vector<MixerGrads>& gs) {
    double s = 0.0;
    for (const MixerGrads& g : gs)
        visit_arrays(g, [&](const char*, const std::vector<double>& a) {
            for (double v : a)
                s += v * v;
        });
    return s;
}

void apply_update(MixerParams& p, const MixerGrads& g, double step) {
    std::vector<std::vector<double>*> params, grads;
    visit_arrays(p, [&](const char*, std::vector<double>& a) { params.push_back(&a); });
    visit_arrays(const_cast<MixerGrads&>(g),
                 [&](const char*, std::vector<double>& a) { grads.push_back(&a); });
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<double>& pa = *params[i];
        const std::vector<double>& ga = *grads[i];
        for (std::size_t q = 0; q < pa.size(); ++q)
            pa[q] -= step * ga[q];
    }
}

void check_dataset(const std::vector<TrainSample>& data, const ScanModel& m) {
    if (data.empty())
        throw Error(ErrorKind::config, "train: dataset is empty");
    for (const TrainSample& s : data) {
        s.d.low.check_geometry(m.geometry, "train sample");
        s.d.high.check_geometry(m.geometry, "train sample");
        s.c_init.check_same_shape(s.c_truth, "train sample");
        if (s.c_init.n_x != m.geometry.n_x || s.c_init.n_y != m.geometry.n_y)
            throw Error(ErrorKind::mismatch, "train sample: image dims do not match geometry");
    }
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    SplitMix64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace

double supervision_weight(const TrainConfig& cfg, std::size_t epoch, std::size_t block,
                          std::size_t n_blocks) {
    if (block + 1 == n_blocks)
        return 1.0;
    const double horizon = cfg.supervision_fraction * double(cfg.epochs);
    return std::max(0.0, 1.0 - double(epoch) / horizon);
}

TrainResult train(const std::vector<TrainSample>& data, UnrolledNet& net,
                  const ScanModel& m, const TrainConfig& cfg) {
    cfg.validate();
    net.surrogate.validate();
    if (net.blocks.empty())
        throw Error(ErrorKind::config, "train: net has no blocks");
    if (net.surrogate.curvature_mode != CurvatureMode::precomputed_bound)
        throw Error(ErrorKind::config,
                    "train: exact backprop requires the precomputed curvature bound");
    check_dataset(data, m);

    const std::size_t N = net.blocks.size();
    const std::size_t S = data.size();

    // DC curvature is frozen per sample at its own init; the vjp treats it
    // as a constant, which this precomputation makes exactly true.
    std::vector<DcContext> contexts;
    contexts.reserve(S);
    for (const TrainSample& s : data)
        contexts.push_back(make_dc_context(s.c_init, m, net.surrogate));

    TrainResult result;
    result.epoch_loss.reserve(cfg.epochs);
    result.block_loss.reserve(cfg.epochs);

    std::vector<BlockTape> states(N);
    int high_loss_streak = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = shuffled_order(S, split_stream(cfg.seed, 1000 + epoch));
        double epoch_objective = 0.0;
        std::vector<double> per_block(N, 0.0);

        for (std::size_t start = 0; start < S; start += cfg.batch_size) {
            const std::size_t stop = std::min(S, start + cfg.batch_size);
            const double inv_batch = 1.0 / double(stop - start);
            std::vector<MixerGrads> grads;
            grads.reserve(N);
            for (std::size_t k = 0; k < N; ++k)
                grads.push_back(zero_grads(net.blocks[k]));

            for (std::size_t idx = start; idx < stop; ++idx) {
                const TrainSample& sample = data[order[idx]];
                const DcContext& ctx = contexts[order[idx]];

                BasisImage c = sample.c_init;
                for (std::size_t k = 0; k < N; ++k)
                    c = block_apply_traced(c, sample.d, m, net.blocks[k], net.surrogate,
                                               ctx, states[k]);

                double weighted = 0.0;
                for (std::size_t k = 0; k < N; ++k) {
                    double err = l2_error(states[k].output, sample.c_truth);
                    per_block[k] += err;
                    weighted += supervision_weight(cfg, epoch, k, N) * err;
                }
                epoch_objective += weighted;

                // Reverse sweep with deep-supervision injections.
                BasisImage dnext(sample.c_init.n_x, sample.c_init.n_y,
                                 sample.c_init.pixel_size_cm);
                for (std::size_t k = N; k-- > 0;) {
                    add_norm_gradient(states[k].output, sample.c_truth,
                                      supervision_weight(cfg, epoch, k, N), dnext);
                    dnext = block_backward(states[k], dnext, sample.d, m, net.blocks[k],
                                           grads[k], inv_batch);
                }
            }

            double nrm = std::sqrt(grads_squared_norm(grads));
            double step = cfg.learning_rate;
            if (nrm > cfg.clip_norm)
                step *= cfg.clip_norm / nrm;
            for (std::size_t k = 0; k < N; ++k)
                apply_update(net.blocks[k], grads[k], step);
        }

        epoch_objective /= double(S);
        for (double& v : per_block)
            v /= double(S);
        result.epoch_loss.push_back(epoch_objective);
        result.block_loss.push_back(per_block);

        if (!std::isfinite(epoch_objective))
            throw Error(ErrorKind::numeric,
                        "train: non-finite loss at epoch " + std::to_string(epoch));
        const double initial = result.epoch_loss.front();
        if (epoch > 0 && epoch_objective > 10.0 * initial)
            ++high_loss_streak;
        else
            high_loss_streak = 0;
        if (high_loss_streak >= 5)
            throw Error(ErrorKind::numeric,
                        "train: diverged; loss " + std::to_string(epoch_objective) +
                            " stayed above 10x the initial " + std::to_string(initial) +
                            " for 5 consecutive epochs");
    }
    return result;
}

MixerParams pretrain_first_block(const std::vector<TrainSample>& data,
                                 const UnrolledNet& net, const ScanModel& m,
                                 const TrainConfig& cfg) {
    cfg.validate();
    net.surrogate.validate();
    if (net.blocks.empty())
        throw Error(ErrorKind::config, "pretrain: net has no blocks");
    if (net.surrogate.curvature_mode != CurvatureMode::precomputed_bound)
        throw Error(ErrorKind::config,
                    "pretrain: exact backprop requires the precomputed curvature bound");
    check_dataset(data, m);

    MixerParams theta = net.blocks.front();
    if (cfg.pretrain_iters == 0)
        return theta;

    const std::size_t S = data.size();

    // The block-0 input never changes, so the DC output of every sample is
    // computed exactly once.
    std::vector<FeatureMap> inputs;
    inputs.reserve(S);
    for (const TrainSample& s : data) {
        DcContext ctx = make_dc_context(s.c_init, m, net.surrogate);
        BasisImage delta = dc_step_cached(s.c_init, s.d, m, net.surrogate, ctx);
        inputs.push_back(stack_input(delta, s.c_init));
    }

    std::vector<std::size_t> order = shuffled_order(S, split_stream(cfg.seed, 500));
    double initial_loss = -1.0;
    int high_loss_streak = 0;

    for (std::size_t iter = 0; iter < cfg.pretrain_iters; ++iter) {
        const std::size_t B = std::min(cfg.batch_size, S);
        MixerGrads grads = zero_grads(theta);
        double batch_loss = 0.0;
        for (std::size_t j = 0; j < B; ++j) {
            const std::size_t idx = order[(iter * B + j) % S];
            const TrainSample& sample = data[idx];
            MixerTape tape;
            FeatureMap mix = mixer_forward(inputs[idx], theta, &tape);
            BasisImage out = sample.c_init;
            const std::size_t plane = out.pixels();
            for (int ch = 0; ch < 2; ++ch) {
                const double* mp = mix.channel(ch);
                double* op = out.channel[ch].data();
                for (std::size_t q = 0; q < plane; ++q)
                    op[q] += mp[q];
            }
            double err = l2_error(out, sample.c_truth);
            batch_loss += err;
            if (err > 0.0) {
                FeatureMap dmix(2, out.n_y, out.n_x);
                const double s = 1.0 / (err * double(B));
                for (int ch = 0; ch < 2; ++ch) {
                    double* dp = dmix.channel(ch);
                    const double* op = out.channel[ch].data();
                    const double* tp = sample.c_truth.channel[ch].data();
                    for (std::size_t q = 0; q < plane; ++q)
                        dp[q] = s * (op[q] - tp[q]);
                }
                mixer_backward(tape, theta, dmix, grads, 1.0);
            }
        }
        batch_loss /= double(B);

        std::vector<MixerGrads> one{grads};
        double nrm = std::sqrt(grads_squared_norm(one));
        double step = cfg.learning_rate;
        if (nrm > cfg.clip_norm)
            step *= cfg.clip_norm / nrm;
        apply_update(theta, one.front(), step);

        if (!std::isfinite(batch_loss))
            throw Error(ErrorKind::numeric,
                        "pretrain: non-finite loss at iteration " + std::to_string(iter));
        if (initial_loss < 0.0)
            initial_loss = batch_loss;
        if (iter > 0 && batch_loss > 10.0 * initial_loss)
            ++high_loss_streak;
        else
            high_loss_streak = 0;
        if (high_loss_streak >= 5)
            throw Error(ErrorKind::numeric,
                        "pretrain: diverged; loss " + std::to_string(batch_loss) +
                            " stayed above 10x the initial " + std::to_string(initial_loss));
    }
    return theta;
}

void broadcast_block(UnrolledNet& net, const MixerParams& theta) {
    check_params(theta);
    if (theta.config.features != net.mixer.features ||
        theta.config.groups != net.mixer.groups || theta.config.kernel != net.mixer.kernel)
        throw Error(ErrorKind::mismatch, "broadcast: block config does not match the net");
    for (MixerParams& b : net.blocks)
        b = theta;
}

namespace {

std::string surrogate_mode_name(CurvatureMode m) {
    return m == CurvatureMode::precomputed_bound ? "precomputed-bound" : "per-iterate";
}

CurvatureMode surrogate_mode_from(const std::string& s) {
    if (s == "precomputed-bound")
        return CurvatureMode::precomputed_bound;
    if (s == "per-iterate")
        return CurvatureMode::per_iterate;
    throw Error(ErrorKind::config, "net manifest: unknown curvature mode '" + s + "'");
}

std::string config_digest(const UnrolledNet& net) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "blocks=%zu;features=%zu;groups=%zu;kernel=%zu;mode=%s;nonneg=%d;step=%.17g",
                  net.blocks.size(), net.mixer.features, net.mixer.groups, net.mixer.kernel,
                  surrogate_mode_name(net.surrogate.curvature_mode).c_str(),
                  net.surrogate.nonnegativity ? 1 : 0, net.surrogate.step_scale);
    return sha256_hex(buf);
}

std::string params_path_for(const std::string& json_path) {
    std::string base = json_path;
    const std::string suffix = ".json";
    if (base.size() > suffix.size() &&
        base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0)
        base.resize(base.size() - suffix.size());
    return base + ".params.dt64";
}

}  // namespace

void save_net(const UnrolledNet& net, const std::string& json_path) {
    if (net.blocks.empty())
        throw Error(ErrorKind::config, "save_net: net has no blocks");
    for (const MixerParams& b : net.blocks)
        check_params(b);

    const std::string params_path = params_path_for(json_path);
    nlohmann::json manifest;
    manifest["format"] = "dect-unrolled-net";
    manifest["version"] = 1;
    manifest["blocks"] = net.blocks.size();
    manifest["mixer"] = {{"features", net.mixer.features},
                         {"groups", net.mixer.groups},
                         {"kernel", net.mixer.kernel}};
    manifest["surrogate"] = {
        {"curvature_mode", surrogate_mode_name(net.surrogate.curvature_mode)},
        {"nonnegativity", net.surrogate.nonnegativity},
        {"step_scale", net.surrogate.step_scale}};
    manifest["config_sha256"] = config_digest(net);

    DenseArray flat;
    nlohmann::json layout = nlohmann::json::array();
    std::vector<double> all;
    for (std::size_t k = 0; k < net.blocks.size(); ++k) {
        visit_arrays(const_cast<MixerParams&>(net.blocks[k]),
                     [&](const char* name, std::vector<double>& a) {
                         nlohmann::json entry;
                         entry["name"] = "block" + std::to_string(k) + "/" + name;
                         entry["offset"] = all.size();
                         entry["count"] = a.size();
                         layout.push_back(entry);
                         all.insert(all.end(), a.begin(), a.end());
                     });
    }
    flat.dims = {all.size()};
    flat.data = std::move(all);
    write_array(params_path, flat);

    manifest["parameters"] = {
        {"file", std::filesystem::path(params_path).filename().string()},
        {"count", flat.data.size()},
        {"sha256", sha256_file_hex(params_path)},
        {"layout", layout}};

    std::ofstream out(json_path);
    if (!out)
        throw Error(ErrorKind::io, "save_net: cannot open '" + json_path + "'",
                    IoCode::open_failed);
    out << manifest.dump(2) << "\n";
    if (!out)
        throw Error(ErrorKind::io, "save_net: write to '" + json_path + "' failed",
                    IoCode::write_failed);
}

UnrolledNet load_net(const std::string& json_path) {
    std::ifstream in(json_path);
    if (!in)
        throw Error(ErrorKind::io, "load_net: cannot open '" + json_path + "'",
                    IoCode::open_failed);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::config,
                    "load_net: '" + json_path + "' is not valid JSON: " + e.what());
    }
    try {
        if (manifest.at("format").get<std::string>() != "dect-unrolled-net")
            throw Error(ErrorKind::config, "load_net: '" + json_path + "': wrong format field");
        if (manifest.at("version").get<int>() != 1)
            throw Error(ErrorKind::config, "load_net: unsupported manifest version");

        UnrolledNet net;
        net.mixer.features = manifest.at("mixer").at("features").get<std::size_t>();
        net.mixer.groups = manifest.at("mixer").at("groups").get<std::size_t>();
        net.mixer.kernel = manifest.at("mixer").at("kernel").get<std::size_t>();
        const auto& sur = manifest.at("surrogate");
        net.surrogate.curvature_mode =
            surrogate_mode_from(sur.at("curvature_mode").get<std::string>());
        net.surrogate.nonnegativity = sur.at("nonnegativity").get<bool>();
        net.surrogate.step_scale = sur.at("step_scale").get<double>();
        net.mixer.validate();
        net.surrogate.validate();

        const std::size_t n_blocks = manifest.at("blocks").get<std::size_t>();
        if (n_blocks == 0)
            throw Error(ErrorKind::config, "load_net: manifest declares zero blocks");
        for (std::size_t k = 0; k < n_blocks; ++k)
            net.blocks.push_back(init_mixer(net.mixer, 0));

        const auto& params_info = manifest.at("parameters");
        std::filesystem::path dir = std::filesystem::path(json_path).parent_path();
        std::string params_path =
            (dir / params_info.at("file").get<std::string>()).string();
        std::string want_hash = params_info.at("sha256").get<std::string>();
        if (sha256_file_hex(params_path) != want_hash)
            throw Error(ErrorKind::io,
                        "load_net: parameter file '" + params_path +
                            "' does not match its recorded digest",
                        IoCode::bad_header);
        DenseArray flat = read_array(params_path);

        // Layout entries are authoritative; every array must be covered.
        std::size_t cursor_checked = 0;
        for (const auto& entry : params_info.at("layout")) {
            const std::string name = entry.at("name").get<std::string>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::size_t count = entry.at("count").get<std::size_t>();
            if (offset + count > flat.data.size())
                throw Error(ErrorKind::config,
                            "load_net: layout entry '" + name + "' exceeds the payload");
            std::size_t slash = name.find('/');
            if (slash == std::string::npos || name.compare(0, 5, "block") != 0)
                throw Error(ErrorKind::config, "load_net: malformed layout name '" + name + "'");
            std::size_t block_idx = std::stoul(name.substr(5, slash - 5));
            if (block_idx >= n_blocks)
                throw Error(ErrorKind::config,
                            "load_net: layout references missing block in '" + name + "'");
            const std::string field = name.substr(slash + 1);
            bool found = false;
            visit_arrays(net.blocks[block_idx],
                         [&](const char* fname, std::vector<double>& a) {
                             if (field != fname)
                                 return;
                             found = true;
                             if (a.size() != count)
                                 throw Error(ErrorKind::config,
                                             "load_net: '" + name + "' has " +
                                                 std::to_string(count) + " values, expected " +
                                                 std::to_string(a.size()));
                             std::copy(flat.data.begin() + offset,
                                       flat.data.begin() + offset + count, a.begin());
                         });
            if (!found)
                throw Error(ErrorKind::config,
                            "load_net: unknown layout entry '" + name + "'");
            cursor_checked += count;
        }
        std::size_t expected = 0;
        for (const MixerParams& b : net.blocks)
            expected += b.parameter_count();
        if (cursor_checked != expected || flat.data.size() != expected)
            throw Error(ErrorKind::config, "load_net: layout does not cover every parameter");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::config,
                    "load_net: '" + json_path + "' manifest field error: " + e.what());
    }
}

}  // namespace dect
