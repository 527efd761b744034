#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace refine {

/// Number of worker threads to use for `requested` (0 = hardware concurrency).
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end) over contiguous blocks of [0, n). The first exception
/// thrown by any block is rethrown on the calling thread.
template <typename Fn>
void parallel_blocks(std::size_t n, unsigned threads, std::size_t block, Fn&& fn) {
  if (n == 0) return;
  block = std::max<std::size_t>(block, 1);
  const std::size_t blocks = (n + block - 1) / block;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), blocks));
  if (workers <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) fn(b * block, std::min(n, (b + 1) * block));
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      std::size_t b;
      {
        std::lock_guard lock(mu);
        if (next >= blocks || error) return;
        b = next++;
      }
      try {
        fn(b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace refine
