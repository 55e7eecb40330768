#pragma once

#include <cstddef>
#include <functional>

namespace hsi {

// Engine-wide worker cap. 1 runs everything inline on the calling thread.
int thread_count();
void set_thread_count(int n);

// Static partition of [0, n) into contiguous chunks, one per worker.
// fn(begin, end, worker) must only write to disjoint outputs; chunk boundaries
// depend only on n and the worker count, so results are reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t, int)>& fn);

// Convenience overload over single indices.
void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace hsi
