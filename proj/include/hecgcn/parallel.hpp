#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace hecgcn {

// Worker count: HECGCN_THREADS env var, else hardware concurrency.
inline int max_threads() {
  static const int n = [] {
    if (const char* e = std::getenv("HECGCN_THREADS")) {
      int v = std::atoi(e);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }();
  return n;
}

// Splits [0, n) into contiguous chunks, one per worker. Each index is handled
// by exactly one worker and per-index reductions run in a fixed order, so
// results are bit-identical to the sequential loop for any thread count.
template <typename Fn>
void parallel_for(int64_t n, int64_t grain, const Fn& fn) {
  if (n <= 0) return;
  int64_t workers = std::min<int64_t>(max_threads(), std::max<int64_t>(1, n / std::max<int64_t>(grain, 1)));
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const int64_t per = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers) - 1);
  for (int64_t c = 1; c < workers; ++c) {
    const int64_t lo = c * per;
    const int64_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(0, std::min(per, n));
  for (auto& t : pool) t.join();
}

}  // namespace hecgcn
