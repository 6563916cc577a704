#pragma once

#include <cstddef>
#include <functional>

namespace ssgan {

// Process-wide worker count for embarrassingly parallel loops (default 1).
void set_thread_count(int threads);
int thread_count();

// Runs fn(i) for i in [0, n) over contiguous chunks. Callers write results
// into disjoint slots, so the outcome does not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ssgan
