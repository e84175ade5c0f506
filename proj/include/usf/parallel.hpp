#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace usf {

// Process-wide worker cap. Zero (the default) means "use the hardware
// concurrency"; results never depend on the cap, only wall time does.
inline std::atomic<int>& worker_cap_storage() {
  static std::atomic<int> cap{0};
  return cap;
}
inline void set_worker_cap(int n) { worker_cap_storage().store(std::max(0, n)); }
inline int worker_cap() {
  const int c = worker_cap_storage().load();
  if (c > 0) return c;
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

// Static-partition parallel loop. Each index writes only its own outputs,
// so the result is identical for any worker count; callers needing a
// reduction must combine per-index results in index order afterwards.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex err_mu;
  std::exception_ptr err;
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int lo = t * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace usf
