#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace lrsgs {

/// Splits [0, count) into `threads` contiguous chunks and runs fn(chunk, begin, end) on each.
/// The partition depends only on (count, threads), so per-chunk reductions in chunk order are deterministic.
template <class Fn>
void parallel_chunks(std::size_t count, int threads, Fn&& fn) {
    const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
    if (n <= 1) {
        fn(std::size_t{0}, std::size_t{0}, count);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(n);
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t begin = count * c / n;
        const std::size_t end = count * (c + 1) / n;
        workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    }
    for (auto& w : workers) {
        w.join();
    }
}

/// Number of chunks parallel_chunks will use.
inline std::size_t chunk_count(std::size_t count, int threads) {
    return std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
}

} // namespace lrsgs
