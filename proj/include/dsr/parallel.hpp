#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "dsr/types.hpp"

namespace dsr {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled exactly once, so per-index results do not depend on scheduling.
/// The first exception thrown by any task is rethrown on the caller.
template <typename Fn>
void parallel_for(Index n, int workers, Fn&& fn) {
  const Index threads = std::min<Index>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (Index t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (Index i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace dsr
