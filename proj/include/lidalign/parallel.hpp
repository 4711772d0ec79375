#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace lidalign {

// Process-wide parallelism budget, set once by the CLI (--threads) and
// honored by the batch loops below. Default is single-threaded so library
// results never depend on machine topology unless explicitly requested.
inline std::size_t& thread_budget() {
    static std::size_t budget = 1;
    return budget;
}

inline void set_thread_budget(std::size_t n) { thread_budget() = n == 0 ? 1 : n; }

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks and
// every iteration writes only its own output slot, so results are identical
// for any thread count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace lidalign
