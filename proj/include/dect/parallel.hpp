#pragma once

#include <cstddef>
#include <functional>

namespace dect {

// Global worker cap. Deterministic mode forces single-pass execution so
// reductions happen in one fixed order; otherwise results are reproducible
// for a fixed thread count (partials are combined in thread order).
void set_max_threads(std::size_t n);
std::size_t max_threads();
void set_deterministic(bool on);
bool deterministic();

// Runs fn(begin, end) over [0, n) in contiguous chunks, possibly from worker
// threads. fn must only write state owned by its own index range.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Like parallel_for but each worker gets a zero-initialized partial buffer of
// `accum_size` doubles; partials are added into out in worker order.
void parallel_accumulate(std::size_t n, std::size_t accum_size, double* out,
                         const std::function<void(std::size_t, std::size_t, double*)>& fn);

}  // namespace dect
