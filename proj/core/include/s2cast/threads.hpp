#pragma once

#include <cstddef>
#include <functional>

namespace s2cast {

/// Worker thread budget: S2CAST_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Splits [0, count) into at most `threads` contiguous chunks and runs
/// fn(begin, end) for each on its own thread. The first exception is rethrown.
void parallel_chunks(std::size_t count, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace s2cast
