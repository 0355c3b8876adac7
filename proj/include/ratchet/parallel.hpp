#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace ratchet {

/// Worker count: explicit value, else $RATCHET_THREADS, else the hardware
/// concurrency (at least 1).
unsigned resolve_threads(std::optional<unsigned> requested);

/// Splits [0, count) into at most `threads` contiguous chunks and runs
/// fn(begin, end) for each on its own thread. The partition depends only on
/// (count, threads). The first exception thrown by a worker is rethrown.
void parallel_chunks(std::size_t count, unsigned threads,
                     const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace ratchet
