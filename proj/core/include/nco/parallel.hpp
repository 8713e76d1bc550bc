#pragma once

#include <cstddef>
#include <functional>

namespace nco {

/// Number of worker threads to use when the caller passes 0.
int default_threads();

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
/// handed out dynamically; callers write results into pre-sized slots so the
/// outcome never depends on scheduling. The first exception thrown by any
/// item is rethrown on the calling thread after all workers stop.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace nco
