#pragma once

/**
 * Deterministic index-space parallel for. Each index owns its output slot
 * and its own derived seed, so results are identical for every worker
 * count.
 */

#include <cstdint>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace wmlab {

inline void parallel_for(std::size_t n, std::uint32_t workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const std::uint32_t k = std::min<std::uint32_t>(workers, static_cast<std::uint32_t>(n));
    pool.reserve(k);
    for (std::uint32_t w = 0; w < k; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
}

}  // namespace wmlab
