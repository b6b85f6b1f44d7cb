#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace qcb {

// Runs fn(i) for i in [0, n) on up to n_threads workers.  Each index writes
// only its own slot, and any reduction the caller performs afterwards walks
// slots in index order, so results are identical for every thread count.
// The first exception in index order wins, mirroring serial behaviour.
template <typename Fn>
void parallel_for(int n_threads, std::size_t n, Fn&& fn) {
    if (n == 0) return;
    if (n_threads < 1) n_threads = 1;
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(n_threads), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }

    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            // Blocked partition; block boundaries depend only on n and the
            // worker count, never on timing.
            const std::size_t lo = n * w / workers;
            const std::size_t hi = n * (w + 1) / workers;
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
}

// Convenience: materialize out[i] = fn(i) in parallel.
template <typename T, typename Fn>
std::vector<T> parallel_map(int n_threads, std::size_t n, Fn&& fn) {
    std::vector<T> out(n);
    parallel_for(n_threads, n, [&](std::size_t i) { out[i] = fn(i); });
    return out;
}

}  // namespace qcb
