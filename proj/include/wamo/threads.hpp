#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace wamo {

// Worker cap from WAMO_THREADS; defaults to 1 so runs are single-core unless
// the user opts in. Results never depend on the worker count.
inline std::size_t thread_cap() {
    const char* env = std::getenv("WAMO_THREADS");
    if (!env) return 1;
    long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    return static_cast<std::size_t>(v);
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace wamo
