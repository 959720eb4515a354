#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace setgen {

// Process-wide worker cap. 1 forces strictly sequential execution (the
// `--deterministic` CLI mode); 0 means hardware concurrency.
inline size_t& max_threads() {
    static size_t n = 0;
    return n;
}

// Static block partition; each index is processed exactly once and workers
// only write to slots they own, so results do not depend on the thread
// count. All internal parallelism goes through here.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn) {
    size_t workers = max_threads() == 0 ? std::thread::hardware_concurrency() : max_threads();
    if (workers <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = std::min(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace setgen
