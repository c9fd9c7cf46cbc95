#pragma once

#include <cstddef>
#include <functional>

namespace artgan {

/// Worker cap: ARTGAN_THREADS if set and positive, else hardware concurrency.
std::size_t worker_threads();

/// Override the cap for the rest of the process (0 restores the default).
void set_worker_threads(std::size_t n);

/// Splits [0, count) into contiguous chunks and runs body(begin, end) on each.
/// Callers must only partition independent outputs; no reduction crosses a
/// chunk boundary, so results never depend on the thread count.
void parallel_for(std::size_t count, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

} // namespace artgan
