#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace gmdiff {

// Process-wide worker count for data-parallel loops. Results never depend on
// it: work is cut into fixed-size chunks, each chunk owns a split PRNG keyed
// by its index, and partials are combined in chunk order.
inline std::atomic<int>& thread_count() {
  static std::atomic<int> n{1};
  return n;
}

inline void set_thread_count(int n) { thread_count().store(n < 1 ? 1 : n); }

inline constexpr std::size_t kChunkSize = 4096;

inline std::size_t chunk_count(std::size_t n) {
  return (n + kChunkSize - 1) / kChunkSize;
}

// f(chunk_index, begin, end) must write only to slots in [begin, end) or to
// per-chunk storage indexed by chunk_index.
template <typename F>
void parallel_chunks(std::size_t n, F&& f) {
  if (n == 0) return;
  std::size_t chunks = chunk_count(n);
  int workers = std::min<int>(thread_count().load(),
                              static_cast<int>(chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      f(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t c = next.fetch_add(1);
        if (c >= chunks) return;
        f(c, c * kChunkSize, std::min(n, (c + 1) * kChunkSize));
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double sq(double x) { return x * x; }

}  // namespace gmdiff
