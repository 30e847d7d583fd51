#pragma once

#include <Eigen/Core>
#include <functional>

namespace fpflow {

/// Number of worker threads to use when `requested` is 0 (auto).
int resolve_thread_count(int requested);

/// Splits [0, n) into contiguous chunks and runs `body(thread_index, begin, end)`
/// on each, using at most `n_threads` workers. The partition depends only on
/// (n, n_threads), so results written per-index are reproducible for any thread
/// count as long as `body` is pure per index.
void parallel_for(Eigen::Index n, int n_threads,
                  const std::function<void(int, Eigen::Index, Eigen::Index)>& body);

}  // namespace fpflow
