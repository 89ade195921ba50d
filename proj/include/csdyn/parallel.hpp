#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

// Deterministic data-parallel helpers.
//
// Work is always expressed in fixed-size blocks and every reduction walks
// block results in block order, so the outcome is bitwise independent of
// how many worker threads execute the blocks.

namespace csdyn {

/// Reduction granularity for Monte Carlo ensembles. Constant on purpose:
/// results must not depend on the shard count.
inline constexpr std::size_t kReductionBlock = 4096;

inline std::size_t block_count(std::size_t n, std::size_t block = kReductionBlock) {
  return n == 0 ? 0 : (n + block - 1) / block;
}

/// Runs f(block_index, begin, end) over [0, n) split into fixed blocks.
template <class F>
void parallel_for_blocks(std::size_t n, int threads, F&& f,
                         std::size_t block = kReductionBlock) {
  const std::size_t nblocks = block_count(n, block);
  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block;
    const std::size_t end = std::min(begin + block, n);
    f(b, begin, end);
  };
  if (threads <= 1 || nblocks <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) run_block(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next.fetch_add(1); b < nblocks;
         b = next.fetch_add(1))
      run_block(b);
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min<int>(threads, static_cast<int>(nblocks));
  pool.reserve(static_cast<std::size_t>(nthreads) - 1);
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

/// Runs f(i) for i in [0, n) on `threads` workers; used for independent
/// trials where each result lands in its own slot.
template <class F>
void parallel_for_each(std::size_t n, int threads, F&& f) {
  parallel_for_blocks(
      n, threads,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) f(i);
      },
      1);
}

}  // namespace csdyn
