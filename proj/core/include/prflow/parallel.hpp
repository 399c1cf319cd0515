#pragma once

#include <cstddef>
#include <functional>

namespace prflow {

/// Worker count: PRFLOW_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so per-index results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace prflow
