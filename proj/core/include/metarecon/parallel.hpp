#pragma once

#include <cstddef>
#include <functional>

namespace metarecon {

/// Worker cap: METARECON_THREADS if set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Runs body(0) ... body(n - 1), spread over up to worker_threads() threads.
/// Workers inherit the caller's grad mode. The first exception thrown is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace metarecon
