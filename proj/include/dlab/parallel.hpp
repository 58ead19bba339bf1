#pragma once

// Deterministic chunked reduction. Trials [0, total) are cut into chunks of
// fixed size; chunk c runs with Rng(derive_seed(seed, c)). Per-chunk results
// are folded in chunk order, so the answer does not depend on how many
// workers ran or in which order they finished.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "dlab/rng.hpp"

namespace dlab {

struct ChunkPlan {
  std::uint64_t total = 0;
  std::uint64_t chunk_size = 4096;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  std::uint64_t chunks() const { return chunk_size == 0 ? 0 : (total + chunk_size - 1) / chunk_size; }
};

/// Runs body(rng, begin, end) -> R per chunk, then fold(acc, r) in chunk order.
template <typename R, typename Body, typename Fold>
R chunked_reduce(const ChunkPlan& plan, R init, Body body, Fold fold) {
  const std::uint64_t nchunks = plan.chunks();
  std::vector<R> parts(nchunks);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    while (true) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        Rng rng(derive_seed(plan.seed, c));
        const std::uint64_t begin = c * plan.chunk_size;
        const std::uint64_t end = std::min(plan.total, begin + plan.chunk_size);
        parts[c] = body(rng, begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(nchunks);
        return;
      }
    }
  };

  const unsigned nw = static_cast<unsigned>(
      std::max<std::uint64_t>(1, std::min<std::uint64_t>(plan.workers == 0 ? 1 : plan.workers, nchunks)));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (unsigned i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& p : parts) fold(init, p);
  return init;
}

/// Parallel map over indices [0, count) with results stored in index order.
template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t count, unsigned workers, Fn fn) {
  std::vector<R> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  const unsigned nw = std::max(1u, std::min<unsigned>(workers == 0 ? 1 : workers, static_cast<unsigned>(count)));
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace dlab
