#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lblab {

inline int default_thread_count() {
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static block partition of [0, n) over `threads` workers.  Each worker owns a
// contiguous index range, so any per-index output written into preallocated
// slots is independent of the thread count; reductions should accumulate into
// per-index storage and be folded serially afterwards.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  if (n == 0) return;
  if (threads < 1) threads = 1;
  if (static_cast<std::size_t>(threads) > n) threads = static_cast<int>(n);
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::exception_ptr err;
  std::mutex err_mtx;
  std::size_t chunk = n / threads, rem = n % threads, begin = 0;
  for (int t = 0; t < threads; ++t) {
    std::size_t len = chunk + (static_cast<std::size_t>(t) < rem ? 1 : 0);
    std::size_t end = begin + len;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mtx);
        if (!err) err = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace lblab
