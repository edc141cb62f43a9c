#pragma once

#include <cstddef>
#include <functional>

namespace confdepth {

/// Worker count: hardware concurrency, capped by CONFDEPTH_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
/// results into per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace confdepth
