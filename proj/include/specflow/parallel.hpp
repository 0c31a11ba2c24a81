#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace specflow {

// Worker cap shared by the estimators. 0 means hardware concurrency.
inline unsigned& thread_cap() {
  static unsigned cap = 0;
  return cap;
}

inline unsigned worker_count(std::size_t tasks) {
  unsigned n = thread_cap() ? thread_cap() : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(tasks, 1)));
}

// Runs body(i) for i in [0, n) on static contiguous blocks. Callers write
// results into slot i, so output never depends on the worker count. The
// first exception thrown by any worker is rethrown here.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  unsigned workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace specflow
