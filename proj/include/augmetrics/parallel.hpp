#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace augmetrics {

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work is claimed from a
/// shared counter, so results must not depend on which thread runs which
/// index. The first exception (lowest index) is rethrown after all workers
/// stop.
template <class Fn> void parallel_for(std::size_t n, int jobs, Fn &&fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  std::exception_ptr first;
  std::size_t first_index = n;
  auto body = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < first_index) {
          first_index = i;
          first = std::current_exception();
        }
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto &t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

} // namespace augmetrics
