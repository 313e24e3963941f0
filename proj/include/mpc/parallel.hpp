#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace mpc {

// Strided static partition; results must be written to per-index slots so
// the outcome does not depend on the thread count.
inline void parallel_for(int n, int requested_threads,
                         const std::function<void(int)>& fn) {
  int n_threads = requested_threads > 0
                      ? requested_threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, std::max(1, n));
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&, t]() {
      for (int i = t; i < n; i += n_threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace mpc
