#pragma once

#include <thread>
#include <vector>

namespace uspil {

/// Fixed contiguous shards: worker w handles [w*n/k, (w+1)*n/k). The shard
/// map depends only on (n_items, n_workers), so reductions that merge worker
/// results in index order are reproducible for a given worker count.
inline std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(
    std::size_t n_items, int n_workers) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t k = static_cast<std::size_t>(n_workers < 1 ? 1 : n_workers);
  for (std::size_t w = 0; w < k; ++w)
    out.emplace_back(n_items * w / k, n_items * (w + 1) / k);
  return out;
}

template <class Fn>
void run_workers(int n_workers, Fn&& fn) {
  if (n_workers <= 1) {
    fn(0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back([&fn, w] { fn(w); });
  for (auto& t : pool) t.join();
}

}  // namespace uspil
