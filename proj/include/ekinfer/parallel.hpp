#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace ekinfer {

inline int max_workers() {
  if (const char* env = std::getenv("EKINFER_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Chunked parallel map over [0, n). Each index must be independent of the
// others (per-particle rng streams, disjoint output columns), so the result
// does not depend on the worker count.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  int workers = std::min(max_workers(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int lo = w * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ekinfer
