#pragma once

#include <cstddef>
#include <functional>

namespace eills {

/// Worker thread budget: hardware concurrency, capped by the EILLS_THREADS
/// environment variable when set to a positive integer.
int thread_budget();

/// Runs fn(i) for every i in [0, count), possibly on multiple threads.
/// Callers must write results only into slot i so that the outcome does not
/// depend on scheduling. Small counts run serially.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace eills
