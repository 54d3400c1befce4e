#pragma once

#include <cstddef>
#include <functional>

namespace rcnet {

/// Number of worker threads used by layer kernels. Initialised from the
/// RCNET_THREADS environment variable (default 1).
std::size_t thread_count();
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n) split into contiguous chunks across
/// thread_count() threads. Callers must make body(i) independent of
/// every other index so results do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rcnet
