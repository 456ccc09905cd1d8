#pragma once

#include <cstddef>
#include <functional>

namespace flexlog {

/// Worker count from FLEXLOG_THREADS, else the hardware concurrency (>= 1).
int worker_count();

/// Calls fn(i) for i in [0, n) on up to `workers` threads (0 = worker_count()).
/// Items are split into contiguous blocks; the first exception is rethrown
/// after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

}  // namespace flexlog
