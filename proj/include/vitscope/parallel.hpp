#pragma once

#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace vitscope {

inline int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0,n). Work items must write to disjoint per-index
// slots; the chunking is static so results never depend on scheduling.
inline void parallel_for(int64_t n, int threads,
                         const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    if (threads <= 0) threads = default_threads();
    if (threads > n) threads = static_cast<int>(n);
    if (threads == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            const int64_t lo = t * chunk;
            const int64_t hi = std::min(n, lo + chunk);
            try {
                for (int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace vitscope
