#include "fpflow/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fpflow {

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(Eigen::Index n, int n_threads,
                  const std::function<void(int, Eigen::Index, Eigen::Index)>& body) {
  if (n <= 0) return;
  const int workers = static_cast<int>(
      std::min<Eigen::Index>(resolve_thread_count(n_threads), n));
  if (workers <= 1) {
    body(0, 0, n);
    return;
  }
  const Eigen::Index chunk = (n + workers - 1) / workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    const Eigen::Index begin = t * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, t, begin, end] {
      try {
        body(t, begin, end);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& w : pool) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fpflow
