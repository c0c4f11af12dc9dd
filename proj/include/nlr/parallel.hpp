#pragma once

#include <cstddef>
#include <functional>

namespace nlr {

// Worker count used by parallel_for. Defaults to the hardware concurrency.
void set_thread_count(int threads);
int thread_count();

// Runs fn(i) for i in [0, n). Work items are claimed dynamically, so fn must
// write its result to a slot owned by i; callers reduce those slots in index
// order, which keeps results independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nlr
