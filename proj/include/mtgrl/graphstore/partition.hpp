#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

/// Streaming greedy balanced partitioner.
///
/// Nodes arrive in BFS order (components started from a seeded random
/// permutation). Each node joins the open part maximising
///   |neighbours already in part| - size(part) / (n / P),
/// ties going to the smaller, then lower-indexed part. Parts are capped at
/// ceil(n / P); once the nodes still to place are no more than the empty
/// parts, each goes to an empty part so that none stays empty.
inline std::vector<int> greedy_partition(const Graph& g, std::size_t parts, std::uint64_t seed) {
  const std::size_t n = g.n();
  if (parts < 2) throw ContractError("greedy_partition: need at least 2 parts");
  if (parts > n) throw ContractError("greedy_partition: more parts than nodes");

  Rng rng = make_stream({seed, stream::kPartition});
  std::vector<std::size_t> starts(n);
  std::iota(starts.begin(), starts.end(), std::size_t{0});
  std::shuffle(starts.begin(), starts.end(), rng);

  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<bool> queued(n, false);
  for (std::size_t s : starts) {
    if (queued[s]) continue;
    std::deque<std::size_t> q{s};
    queued[s] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop_front();
      order.push_back(u);
      for (std::size_t v : g.adjacency.neighbors(u)) {
        if (!queued[v]) {
          queued[v] = true;
          q.push_back(v);
        }
      }
    }
  }

  const double ideal = static_cast<double>(n) / static_cast<double>(parts);
  const auto capacity = static_cast<std::size_t>(std::ceil(ideal));
  std::vector<int> label(n, -1);
  std::vector<std::size_t> size(parts, 0);
  std::vector<std::size_t> hits(parts, 0);
  std::size_t empty_parts = parts;

  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::size_t u = order[idx];
    const std::size_t remaining = n - idx;
    std::size_t best = parts;
    if (remaining <= empty_parts) {
      for (std::size_t p = 0; p < parts && best == parts; ++p)
        if (size[p] == 0) best = p;
    } else {
      std::fill(hits.begin(), hits.end(), 0);
      for (std::size_t v : g.adjacency.neighbors(u))
        if (label[v] >= 0) ++hits[static_cast<std::size_t>(label[v])];
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < parts; ++p) {
        if (size[p] >= capacity) continue;
        const double score =
            static_cast<double>(hits[p]) - static_cast<double>(size[p]) / ideal;
        if (best == parts || score > best_score ||
            (score == best_score && size[p] < size[best])) {
          best = p;
          best_score = score;
        }
      }
    }
    label[u] = static_cast<int>(best);
    if (size[best]++ == 0) --empty_parts;
  }
  return label;
}

}  // namespace mtgrl
