#ifndef PHOTOMASK_PARALLEL_HPP
#define PHOTOMASK_PARALLEL_HPP

#include <algorithm>
#include <thread>
#include <vector>

namespace photomask {

/// Runs fn(y) for every row in [0, rows). Rows are split into contiguous blocks, one per
/// thread; fn must only write state owned by its row so results match the serial order.
template <typename Fn>
void for_each_row(int rows, int threads, Fn&& fn) {
  const int workers = std::clamp(threads, 1, std::max(rows, 1));
  if (workers == 1) {
    for (int y = 0; y < rows; ++y) fn(y);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const int block = (rows + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * block;
    const int end = std::min(rows, begin + block);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (int y = begin; y < end; ++y) fn(y);
    });
  }
}

}  // namespace photomask

#endif  // PHOTOMASK_PARALLEL_HPP
