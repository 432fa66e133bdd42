#pragma once

#include <functional>

namespace gridmp {

/// Worker count from the GRIDMP_THREADS environment variable (default 1),
/// read once per process.
int thread_count();

/// Runs fn(0..n-1) over contiguous index ranges on up to thread_count()
/// threads. Callers must guarantee disjoint writes; the partition is
/// deterministic so results do not depend on scheduling.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace gridmp
