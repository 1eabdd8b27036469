#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace sediff {

// Worker count: SEDIFF_WORKERS env var if set, else hardware concurrency.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("SEDIFF_WORKERS")) {
        const long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(chunk_index, begin, end) over fixed chunks of [0, n). The chunk
// layout depends only on n and n_chunks — never on the worker count — so
// per-chunk reductions merged in chunk order are bit-identical regardless of
// parallelism.
inline void parallel_chunks(std::size_t n, std::size_t n_chunks,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (n_chunks > n) n_chunks = n;
    if (n_chunks == 0) n_chunks = 1;
    const std::size_t workers = std::min(worker_count(), n_chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const std::size_t begin = c * n / n_chunks;
            const std::size_t end = (c + 1) * n / n_chunks;
            fn(c, begin, end);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= n_chunks) return;
                const std::size_t begin = c * n / n_chunks;
                const std::size_t end = (c + 1) * n / n_chunks;
                fn(c, begin, end);
            }
        });
    }
    for (auto& t : pool) t.join();
}

// Convenience: parallel loop over items, one call per item.
inline void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& fn) {
    parallel_chunks(n, n, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace sediff
