#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace hullfuse {

/// Worker-pool size used by parallel_for. Outputs never depend on this value:
/// every parallel loop writes per-item slots and all reductions run
/// sequentially afterwards, so results are bit-identical for any thread count.
inline int& thread_count() {
  static int count = [] {
    if (const char* env = std::getenv("HULLFUSE_THREADS")) {
      int n = std::atoi(env);
      if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return count;
}

inline void set_thread_count(int n) { thread_count() = n < 1 ? 1 : n; }

/// Runs fn(i) for i in [0, n). fn must only touch state owned by item i.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = std::min<int>(thread_count(), static_cast<int>(n));
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = std::max<std::size_t>(1, n / (4 * workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t begin = next.fetch_add(chunk);
        if (begin >= n) return;
        std::size_t end = std::min(n, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hullfuse
