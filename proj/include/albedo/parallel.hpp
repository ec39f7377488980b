#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace albedo {

// Threading model: loops are split into contiguous index blocks, one per
// worker, and each worker writes only its own slice of the output. Results
// are therefore bitwise independent of the thread count.
inline int hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& body) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    std::vector<std::thread> pool;
    pool.reserve(nw);
    const std::size_t chunk = (count + nw - 1) / nw;
    for (std::size_t w = 0; w < nw; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Deterministic parallel reduction: per-index partial values are stored and
// summed in index order afterwards.
template <typename Fn>
double parallel_sum(std::size_t count, int threads, Fn&& term) {
    std::vector<double> parts(count, 0.0);
    parallel_for(count, threads, [&](std::size_t i) { parts[i] = term(i); });
    double s = 0.0;
    for (double p : parts) s += p;
    return s;
}

}  // namespace albedo
