#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

/// Positive edges split three ways, each with an equal number of sampled
/// non-edges, plus the graph that keeps only training edges for message
/// passing.
struct EdgeSplit {
  std::vector<Edge> train_pos, val_pos, test_pos;
  std::vector<Edge> train_neg, val_neg, test_neg;
  Graph train_graph;
};

inline EdgeSplit split_edges(const Graph& g, std::array<double, 3> ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ContractError("split_edges: ratios must be nonnegative and sum to 1");
  }
  Rng rng = make_stream({seed, stream::kSplit});
  std::vector<Edge> edges = g.adjacency.edges();
  std::shuffle(edges.begin(), edges.end(), rng);
  const std::size_t m = edges.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(m)));
  const auto n_val = std::min(
      m - n_train, static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(m))));

  EdgeSplit split;
  split.train_pos.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train),
                       edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());

  // One uniformly drawn non-edge per positive, never reused across splits.
  std::set<Edge> used;
  std::uniform_int_distribution<std::size_t> pick(0, g.n() == 0 ? 0 : g.n() - 1);
  const std::size_t max_trials = 100 * std::max<std::size_t>(m, 1);
  std::size_t trials = 0;
  auto draw = [&](std::size_t count, std::vector<Edge>& out) {
    while (out.size() < count) {
      if (trials++ >= max_trials) {
        throw SamplingError("split_edges: could not find enough non-edges after " +
                            std::to_string(max_trials) + " trials");
      }
      std::size_t u = pick(rng);
      std::size_t v = pick(rng);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (g.adjacency.has_edge(u, v) || !used.emplace(u, v).second) continue;
      out.emplace_back(u, v);
    }
  };
  draw(split.train_pos.size(), split.train_neg);
  draw(split.val_pos.size(), split.val_neg);
  draw(split.test_pos.size(), split.test_neg);

  split.train_graph = Graph::from_edges(g.n(), split.train_pos, g.features, g.labels);
  return split;
}

}  // namespace mtgrl
