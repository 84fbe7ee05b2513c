#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "dect/common.hpp"

namespace dect {

// In-place iterative radix-2 FFT. Length must be a power of two.
// inverse = true applies the conjugate transform and the 1/n scale, so
// ifft(fft(x)) == x to roundoff.
void fft_radix2(std::vector<std::complex<double>>& x, bool inverse);

std::size_t next_pow2(std::size_t n);

}  // namespace dect
