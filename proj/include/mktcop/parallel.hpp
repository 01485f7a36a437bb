#pragma once

#include <cstddef>
#include <functional>

namespace mktcop {

/// Upper bound on worker threads used by parallel_for. 0 means hardware concurrency.
void set_thread_limit(unsigned limit);
unsigned thread_limit();

/// Runs body(i) for i in [0, count). Each index is processed exactly once;
/// results must be written to per-index slots so output does not depend on
/// scheduling. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mktcop
