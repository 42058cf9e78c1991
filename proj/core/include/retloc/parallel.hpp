#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace retloc {

/// Worker count for data-parallel loops: hardware concurrency, capped by the
/// RETLOC_THREADS environment variable when set.
std::size_t thread_count();

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; callers write only to per-index slots, so results
/// do not depend on the number of workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t min_chunk, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), min_chunk == 0 ? n : n / min_chunk);
  if (workers <= 1) {
    if (n > 0) fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) {
      threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace retloc
