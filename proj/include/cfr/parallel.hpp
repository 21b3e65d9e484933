#pragma once

#include <cstddef>
#include <functional>

namespace cfr {

// Calls fn(i) for i in [0, n) on up to `jobs` threads. Work is handed out by an
// atomic counter; callers write into slot i so the result order never depends
// on scheduling. The first exception thrown by any task is rethrown after all
// threads join.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cfr
