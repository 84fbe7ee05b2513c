#include "dect/rng.hpp"

#include <cmath>

#include "dect/common.hpp"

namespace dect {

double SplitMix64::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_double() - 1.0;
        v = 2.0 * next_double() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
}

namespace {

double poisson_inversion(SplitMix64& rng, double mean) {
    // Knuth-style sequential search on the CDF.
    double p = std::exp(-mean);
    double cumulative = p;
    double u = rng.next_double();
    double k = 0.0;
    while (u > cumulative && k < 10000.0) {
        k += 1.0;
        p *= mean / k;
        cumulative += p;
    }
    return k;
}

// PTRS sampler, Hormann "The transformed rejection method for generating
// Poisson random variables" (1993), valid for mean >= 10.
double poisson_ptrs(SplitMix64& rng, double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);

    while (true) {
        double u = rng.next_double() - 0.5;
        double v = rng.next_double();
        double us = 0.5 - std::fabs(u);
        double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr)
            return k;
        if (k < 0.0 || (us < 0.013 && v > us))
            continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            k * loglam - mean - std::lgamma(k + 1.0))
            return k;
    }
}

}  // namespace

double poisson_draw(SplitMix64& rng, double mean) {
    if (!(mean > 0.0))
        throw Error(ErrorKind::numeric, "poisson_draw: mean must be positive");
    if (mean < 10.0)
        return poisson_inversion(rng, mean);
    return poisson_ptrs(rng, mean);
}

double poisson_at(std::uint64_t seed, std::uint64_t index, double mean) {
    SplitMix64 rng(split_stream(seed, index));
    return poisson_draw(rng, mean);
}

}  // namespace dect
