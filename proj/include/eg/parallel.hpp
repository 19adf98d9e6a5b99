#pragma once

#include <cstddef>
#include <functional>

namespace eg {

/// Caps the number of worker threads used by parallel_for. 1 disables
/// parallelism entirely. Thread-safe to call between operations only.
void set_max_threads(int n);
int max_threads();

/// Runs fn(begin, end) over contiguous chunks covering [0, n). Each index is
/// handled by exactly one chunk, so any computation that is pure per index
/// produces identical results for every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace eg
