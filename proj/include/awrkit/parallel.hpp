#pragma once

#include <exception>
#include <functional>

namespace awrkit {

/// Worker count: the AWRKIT_THREADS environment cap if set, else the hardware
/// concurrency, never below 1.
int default_threads();

/// Runs fn(i) for i in [0, n) over up to `threads` workers. Each index is
/// visited exactly once; callers write results by index so output order never
/// depends on scheduling. The first exception thrown by any worker is rethrown.
/// Keeps large freed blocks in the heap instead of returning them to the OS,
/// which otherwise dominates training time through page faults on the big
/// im2col buffers. No-op outside glibc; safe to call repeatedly.
void tune_allocator();

void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace awrkit
