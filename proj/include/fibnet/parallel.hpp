#pragma once

#include <cstddef>
#include <functional>

namespace fibnet {

// Worker count from FIBNET_THREADS (default 1). Read once per process.
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs body(i) for i in [0, count). Work items must write disjoint outputs;
// callers that reduce do so afterwards in index order, so results do not
// depend on the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)> &body);

}  // namespace fibnet
