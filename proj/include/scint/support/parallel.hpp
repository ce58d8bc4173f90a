#pragma once

// Minimal fork-join parallel map over an index range. Each index writes its
// own result slot, and any reduction is done by the caller in index order, so
// results never depend on the worker count or on scheduling.

#include <atomic>
#include <cstdlib>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace scint {

inline int default_workers() {
  if (const char* env = std::getenv("SCINT_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

inline int resolve_workers(int requested) { return requested > 0 ? requested : default_workers(); }

template <typename Fn>
void parallel_for(std::int64_t n, int workers, Fn&& fn) {
  workers = resolve_workers(workers);
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::vector<std::thread> pool;
  const int nthreads = static_cast<int>(std::min<std::int64_t>(workers, n));
  pool.reserve(static_cast<std::size_t>(nthreads));
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace scint
