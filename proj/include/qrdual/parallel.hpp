#pragma once

#include <functional>

namespace qrdual {

/// Caps the number of worker threads used by parallel_for. 0 restores the
/// default (hardware concurrency).
void set_max_threads(int threads);
int max_threads();

/// Runs fn(i) for i in [begin, end). Tasks must be independent; results keyed
/// by i stay deterministic regardless of scheduling. Exceptions from tasks
/// are rethrown on the calling thread (first by index).
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace qrdual
