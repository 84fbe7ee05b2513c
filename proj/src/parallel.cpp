#include "dect/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dect {

namespace {

std::size_t g_max_threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
bool g_deterministic = false;

std::size_t effective_threads(std::size_t n) {
    if (g_deterministic)
        return 1;
    std::size_t t = std::min(g_max_threads, n);
    return std::max<std::size_t>(1, t);
}

}  // namespace

void set_max_threads(std::size_t n) { g_max_threads = std::max<std::size_t>(1, n); }
std::size_t max_threads() { return g_max_threads; }
void set_deterministic(bool on) { g_deterministic = on; }
bool deterministic() { return g_deterministic; }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0)
        return;
    std::size_t nt = effective_threads(n);
    if (nt == 1) {
        fn(0, n);
        return;
    }
    std::size_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> workers;
    workers.reserve(nt);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t b = t * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e)
            break;
        workers.emplace_back([&fn, &first_error, &error_mutex, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto& w : workers)
        w.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

void parallel_accumulate(std::size_t n, std::size_t accum_size, double* out,
                         const std::function<void(std::size_t, std::size_t, double*)>& fn) {
    if (n == 0)
        return;
    std::size_t nt = effective_threads(n);
    if (nt == 1) {
        fn(0, n, out);
        return;
    }
    std::size_t chunk = (n + nt - 1) / nt;
    std::vector<std::vector<double>> partials(nt);
    std::vector<std::thread> workers;
    workers.reserve(nt);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t b = t * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e)
            break;
        partials[t].assign(accum_size, 0.0);
        double* buf = partials[t].data();
        workers.emplace_back([&fn, &first_error, &error_mutex, b, e, buf] {
            try {
                fn(b, e, buf);
            } catch (...) {
                std::lock_guard<std::mutex> lk(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto& w : workers)
        w.join();
    if (first_error)
        std::rethrow_exception(first_error);
    // Partials merge in worker order so the reduction is independent of scheduling.
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t i = 0; i < partials[t].size(); ++i)
            out[i] += partials[t][i];
}

}  // namespace dect
