#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace bcgan {

// Global worker cap. BCGAN_THREADS=1 gives bitwise-reproducible runs:
// with a single worker every loop below degenerates to a plain serial loop.
// With N workers the index space is split into fixed static chunks, so each
// output element is still produced by exactly one serial computation.

namespace detail {
inline std::atomic<int>& thread_cap() {
    static std::atomic<int> cap{0};  // 0 = uninitialized
    return cap;
}
}  // namespace detail

inline void set_threads(int n) {
    detail::thread_cap().store(n < 1 ? 1 : n);
}

inline int num_threads() {
    int cap = detail::thread_cap().load();
    if (cap > 0) return cap;
    if (const char* env = std::getenv("BCGAN_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) {
            set_threads(n);
            return n;
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw == 0 ? 1 : static_cast<int>(hw);
    set_threads(n);
    return n;
}

// fn(begin, end) over [0, n) in static chunks
template <class Fn>
void parallel_for(int64_t n, Fn&& fn) {
    int workers = std::min<int64_t>(num_threads(), n);
    if (workers <= 1 || n < 2048) {
        if (n > 0) fn(int64_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    int64_t chunk = (n + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min<int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
    }
    fn(int64_t{0}, std::min<int64_t>(chunk, n));
    for (auto& t : pool) t.join();
}

// deterministic sum reduction: per-chunk partials combined in chunk order
template <class Fn>
double parallel_reduce_sum(int64_t n, Fn&& fn) {
    int workers = std::min<int64_t>(num_threads(), n);
    if (workers <= 1 || n < 8192) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += fn(i);
        return acc;
    }
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<double> partial(workers, 0.0);
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    auto run = [&](int w) {
        int64_t lo = w * chunk;
        int64_t hi = std::min<int64_t>(lo + chunk, n);
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) acc += fn(i);
        partial[w] = acc;
    };
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace bcgan
