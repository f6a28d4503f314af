#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace blinksim {

/*
 * Splits [0, count) into at most `threads` contiguous chunks and runs
 * fn(chunk_index, begin, end) on each. Chunk boundaries depend only on
 * (count, threads), so callers that merge chunk outputs in chunk order get
 * results that are independent of scheduling.
 */
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
  if (workers == 1) {
    fn(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = count * w / workers;
      const std::size_t end = count * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] {
        try {
          fn(w, begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t chunk_count(std::size_t count, unsigned threads) {
  return std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
}

}  // namespace blinksim
