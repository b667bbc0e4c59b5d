#pragma once

// Fan-out over independent tasks. Results are written into per-task slots and
// reduced by the caller in index order, so output never depends on the number
// of workers.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace rwre {

/// Worker count from RWRE_WORKERS, else 1.
inline int default_workers() {
  if (const char* s = std::getenv("RWRE_WORKERS")) {
    const int n = std::atoi(s);
    if (n >= 1) return n;
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on `workers` threads. The first exception thrown
/// by any task (lowest index wins) is rethrown after all threads join.
template <class Fn>
void parallel_for(std::int64_t n, int workers, Fn&& fn) {
  if (n <= 0) return;
  workers = std::max(1, static_cast<int>(std::min<std::int64_t>(workers, n)));
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  std::int64_t error_index = n;
  auto body = [&] {
    while (true) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline constexpr std::int64_t kReductionBlock = 4096;

/// Sum of f(i) over [0, n): fixed blocks summed sequentially, then block
/// totals summed in order. Acc must support += and value-initialization.
template <class Acc, class Fn>
Acc blocked_sum(std::int64_t n, int workers, Fn&& f) {
  const std::int64_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<Acc> partial(static_cast<std::size_t>(blocks));
  parallel_for(blocks, workers, [&](std::int64_t b) {
    Acc acc{};
    const std::int64_t end = std::min(n, (b + 1) * kReductionBlock);
    for (std::int64_t i = b * kReductionBlock; i < end; ++i) acc += f(i);
    partial[static_cast<std::size_t>(b)] = acc;
  });
  Acc total{};
  for (const auto& p : partial) total += p;
  return total;
}

}  // namespace rwre
