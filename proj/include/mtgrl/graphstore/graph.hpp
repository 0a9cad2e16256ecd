#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/numcore/sparse_adjacency.hpp"

namespace mtgrl {

/// Undirected attributed graph without self-loops.
struct Graph {
  SparseAdjacency adjacency;
  DenseMatrix features;
  std::optional<std::vector<int>> labels;

  std::size_t n() const noexcept { return adjacency.n(); }
  std::size_t feature_dim() const noexcept { return features.cols(); }
  std::size_t num_edges() const { return adjacency.num_undirected_edges(); }

  static Graph from_edges(std::size_t n, std::span<const Edge> edges, DenseMatrix features,
                          std::optional<std::vector<int>> labels = std::nullopt) {
    Graph g{SparseAdjacency::from_undirected_edges(n, edges), std::move(features),
            std::move(labels)};
    g.validate();
    return g;
  }

  void validate() const {
    if (!adjacency.undirected()) throw ContractError("graph adjacency must be undirected");
    for (std::size_t u = 0; u < n(); ++u)
      if (adjacency.has_edge(u, u)) throw ContractError("graph contains a self-loop");
    if (features.rows() != n()) {
      throw DimensionError("feature rows " + std::to_string(features.rows()) +
                           " != node count " + std::to_string(n()));
    }
    if (!all_finite(features)) throw NumericError("graph features contain non-finite values");
    if (labels && labels->size() != n()) throw DimensionError("label count != node count");
  }

  bool operator==(const Graph&) const = default;
};

/// Node-induced subgraph with the mapping back to parent ids.
struct SubgraphSample {
  std::vector<std::size_t> node_ids;  // sorted, unique parent ids
  SparseAdjacency adjacency;
  DenseMatrix features;
  std::vector<std::size_t> seed_ids;  // parent ids, subset of node_ids

  std::size_t n() const noexcept { return node_ids.size(); }

  bool operator==(const SubgraphSample&) const = default;
};

/// Induced subgraph on `node_ids` (sorted and deduplicated here).
inline SubgraphSample induced_subgraph(const Graph& g, std::vector<std::size_t> node_ids,
                                       std::vector<std::size_t> seed_ids = {}) {
  std::sort(node_ids.begin(), node_ids.end());
  node_ids.erase(std::unique(node_ids.begin(), node_ids.end()), node_ids.end());
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> local(g.n(), kAbsent);
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    if (node_ids[i] >= g.n()) throw ContractError("induced_subgraph: node id out of range");
    local[node_ids[i]] = i;
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    for (std::size_t v : g.adjacency.neighbors(node_ids[i])) {
      const std::size_t j = local[v];
      if (j != kAbsent && i < j) edges.emplace_back(i, j);
    }
  }
  DenseMatrix feats(node_ids.size(), g.feature_dim());
  for (std::size_t i = 0; i < node_ids.size(); ++i) {
    auto src = g.features.row(node_ids[i]);
    std::copy(src.begin(), src.end(), feats.row(i).begin());
  }
  std::sort(seed_ids.begin(), seed_ids.end());
  seed_ids.erase(std::unique(seed_ids.begin(), seed_ids.end()), seed_ids.end());
  for (std::size_t s : seed_ids) {
    if (s >= g.n() || local[s] == kAbsent) {
      throw ContractError("induced_subgraph: seed not among node ids");
    }
  }
  auto adjacency = SparseAdjacency::from_undirected_edges(node_ids.size(), edges);
  return SubgraphSample{std::move(node_ids), std::move(adjacency), std::move(feats),
                        std::move(seed_ids)};
}

/// The whole graph viewed as a sample.
inline SubgraphSample full_sample(const Graph& g) {
  std::vector<std::size_t> ids(g.n());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return SubgraphSample{ids, g.adjacency, g.features, ids};
}

}  // namespace mtgrl
