#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace addeq {

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Process-wide worker count used by the data-parallel loops.
inline int& worker_count() {
  static int workers = default_workers();
  return workers;
}

inline void set_workers(int n) { worker_count() = std::max(1, n); }

/// Runs fn(chunk_index, begin, end) for fixed-size chunks of [0, n).
/// Chunk boundaries depend only on n and chunk, never on the worker count, so
/// reductions over per-chunk partials in chunk order are reproducible.
inline void parallel_chunks(std::size_t n, std::size_t chunk,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                            int workers = 0) {
  if (n == 0) return;
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t nchunks = (n + chunk - 1) / chunk;
  if (workers <= 0) workers = worker_count();
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(workers), nchunks);
  if (nw <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> threads;
  threads.reserve(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < nchunks; c += nw) fn(c, c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (err) std::rethrow_exception(err);
}

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) { return n == 0 ? 0 : (n + chunk - 1) / chunk; }

}  // namespace addeq
