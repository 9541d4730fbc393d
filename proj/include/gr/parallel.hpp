#pragma once

#include <cstddef>
#include <functional>

namespace gr {

/// Caps internal parallelism; 0 restores the hardware default.
void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, n) with a static partition across threads.
/// Callers write results to per-index slots and reduce serially, so output is independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gr
