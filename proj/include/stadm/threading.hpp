#pragma once

#include <cstddef>
#include <functional>

namespace stadm {

/// Worker cap: explicit override if set, else STADM_THREADS, else hardware
/// concurrency. Always at least 1.
int max_threads();

/// Programmatic override of the worker cap; 0 restores env/hardware default.
void set_thread_cap(int n);

/// Runs fn(begin, end) over a partition of [0, n). Chunks are contiguous and
/// each index is processed by exactly one worker, so any computation whose
/// per-index arithmetic is self-contained gives bit-identical results for
/// every thread count. Serial when nested, when n is small, or with 1 worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t grain = 1);

}  // namespace stadm
