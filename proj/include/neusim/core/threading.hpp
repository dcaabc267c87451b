#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace neusim {

// Worker count: min(hardware_concurrency, NEUSIM_THREADS if set). At least 1.
std::size_t worker_count();

// Runs fn(begin, end) over disjoint index ranges. The partition may depend on
// the worker count, so fn must write only to slots addressed by absolute
// index; then the output is identical for every worker count.
void parallel_for_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

// Partition of [0,n) into ranges that depend on n alone — never on the worker
// count. Reducing per-shard partials in shard order therefore gives
// bitwise-identical results whatever NEUSIM_THREADS says.
std::vector<std::pair<std::size_t, std::size_t>> fixed_shards(std::size_t n);

// Runs fn(shard_index, begin, end) for every shard, distributing shards over
// the worker pool. fn must write only to shard-indexed slots.
void parallel_over_shards(const std::vector<std::pair<std::size_t, std::size_t>>& shards,
                          const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

} // namespace neusim
