#pragma once

#include <cstddef>
#include <functional>

namespace reflect {

/// Caps the worker count used by `parallel_for`. 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Progress callback: `done` of `total` units finished. May be called from worker threads.
using ProgressFn = std::function<void(int done, int total)>;

/// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace reflect
