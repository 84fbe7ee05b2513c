#pragma once

#include <cstdint>

namespace dect {

// SplitMix64: the reference sequence from Vigna's public-domain implementation.
// Used both as the portable generator and as the stream-splitting hash, so
// every consumer of randomness is exactly reproducible across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Marsaglia's polar method (no trig).
    double next_normal();

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Decorrelated substream for (seed, index); lets per-bin sampling run in any
// order or partitioning without changing the draw.
inline std::uint64_t split_stream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mix(seed ^ (0x632be59bd9b4e019ull * (index + 1)));
    return mix.next_u64();
}

// Poisson draw: sequential inversion for mean < 10, PTRS transformed
// rejection (Hormann 1993) otherwise. Consumes rng uniforms only.
double poisson_draw(SplitMix64& rng, double mean);

// One Poisson draw on an addressable substream.
double poisson_at(std::uint64_t seed, std::uint64_t index, double mean);

}  // namespace dect
