#pragma once

#include <cstddef>
#include <functional>

namespace rigkit {

// Worker count: RIGKIT_THREADS if set and positive, else the hardware
// concurrency (at least 1).
int DefaultThreadCount();
void SetThreadCount(int threads);
int ThreadCount();

// Runs fn(i) for i in [0, n) over contiguous blocks. Each index is visited
// exactly once; callers write results into per-index slots so the outcome
// does not depend on scheduling.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace rigkit
