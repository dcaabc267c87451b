#include "neusim/core/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace neusim {

std::size_t worker_count() {
    std::size_t hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("NEUSIM_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(v));
    }
    return hw;
}

void parallel_for_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : pool) t.join();
}

std::vector<std::pair<std::size_t, std::size_t>> fixed_shards(std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> shards;
    if (n == 0) return shards;
    const std::size_t k = std::min<std::size_t>(n, 32);  // constant, not worker-derived
    const std::size_t chunk = (n + k - 1) / k;
    for (std::size_t b = 0; b < n; b += chunk) shards.emplace_back(b, std::min(n, b + chunk));
    return shards;
}

void parallel_over_shards(const std::vector<std::pair<std::size_t, std::size_t>>& shards,
                          const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (shards.empty()) return;
    const std::size_t workers = std::min(worker_count(), shards.size());
    if (workers <= 1) {
        for (std::size_t s = 0; s < shards.size(); ++s) fn(s, shards[s].first, shards[s].second);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t s = next.fetch_add(1);
                if (s >= shards.size()) return;
                fn(s, shards[s].first, shards[s].second);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace neusim
