#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

enum class SamplerKind { Full, KHop, UniformNodes };

/// Subgraph sampling and augmentation settings of one pretext task.
struct AugmentationSpec {
  SamplerKind sampler = SamplerKind::Full;
  std::size_t hop_order = 0;            // KHop only; 0 means the whole graph
  std::optional<double> seed_fraction;  // share of n used as seeds; nullopt = "full"
  double feature_mask_ratio = 0.0;
  double edge_drop_ratio = 0.0;

  void validate() const {
    if (!(feature_mask_ratio >= 0.0 && feature_mask_ratio < 1.0)) {
      throw ConfigError("feature_mask_ratio must lie in [0,1)");
    }
    if (!(edge_drop_ratio >= 0.0 && edge_drop_ratio < 1.0)) {
      throw ConfigError("edge_drop_ratio must lie in [0,1)");
    }
    if (seed_fraction && !(*seed_fraction > 0.0 && *seed_fraction <= 1.0)) {
      throw ConfigError("seed_fraction must lie in (0,1]");
    }
  }
};

/// All nodes within `k` hops of any seed, with induced edges. k = 0 returns
/// the whole graph.
inline SubgraphSample k_hop_sample(const Graph& g, std::span<const std::size_t> seeds,
                                   std::size_t k) {
  if (seeds.empty()) throw ContractError("k_hop_sample: empty seed set");
  for (std::size_t s : seeds)
    if (s >= g.n()) throw ContractError("k_hop_sample: seed out of range");
  std::vector<std::size_t> seed_ids(seeds.begin(), seeds.end());
  if (k == 0) {
    SubgraphSample whole = full_sample(g);
    std::sort(seed_ids.begin(), seed_ids.end());
    seed_ids.erase(std::unique(seed_ids.begin(), seed_ids.end()), seed_ids.end());
    whole.seed_ids = std::move(seed_ids);
    return whole;
  }
  std::vector<bool> reached(g.n(), false);
  std::vector<std::size_t> frontier;
  for (std::size_t s : seeds) {
    if (!reached[s]) {
      reached[s] = true;
      frontier.push_back(s);
    }
  }
  std::vector<std::size_t> nodes = frontier;
  for (std::size_t hop = 0; hop < k && !frontier.empty(); ++hop) {
    std::vector<std::size_t> next;
    for (std::size_t u : frontier) {
      for (std::size_t v : g.adjacency.neighbors(u)) {
        if (!reached[v]) {
          reached[v] = true;
          next.push_back(v);
        }
      }
    }
    nodes.insert(nodes.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return induced_subgraph(g, std::move(nodes), std::move(seed_ids));
}

/// `count` nodes drawn uniformly without replacement, induced edges.
inline SubgraphSample uniform_node_sample(const Graph& g, std::size_t count, Rng& rng) {
  if (count < 1 || count > g.n()) {
    throw ContractError("uniform_node_sample: count " + std::to_string(count) +
                        " outside [1, " + std::to_string(g.n()) + "]");
  }
  std::vector<std::size_t> all(g.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng);
  auto seeds = chosen;
  return induced_subgraph(g, std::move(chosen), std::move(seeds));
}

inline SubgraphSample uniform_node_sample(const Graph& g, std::size_t count, std::uint64_t seed) {
  Rng rng = make_stream({seed});
  return uniform_node_sample(g, count, rng);
}

/// max(1, floor(fraction * n)); the whole node set when fraction is "full".
inline std::size_t seed_count_for(std::size_t n, std::optional<double> fraction) {
  if (!fraction) return n;
  const auto count = static_cast<std::size_t>(std::floor(*fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(count, 1, n);
}

/// Applies the sampler part of an AugmentationSpec (no masking or dropping).
inline SubgraphSample sample_subgraph(const Graph& g, const AugmentationSpec& spec, Rng& rng) {
  if (spec.sampler == SamplerKind::Full || !spec.seed_fraction) return full_sample(g);
  const std::size_t count = seed_count_for(g.n(), spec.seed_fraction);
  if (spec.sampler == SamplerKind::UniformNodes) return uniform_node_sample(g, count, rng);
  std::vector<std::size_t> all(g.n());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> seeds;
  std::sample(all.begin(), all.end(), std::back_inserter(seeds), count, rng);
  return k_hop_sample(g, seeds, spec.hop_order);
}

/// Removes each undirected edge independently with probability `ratio`.
inline SubgraphSample drop_edges(const SubgraphSample& s, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ContractError("drop_edges: ratio outside [0,1]");
  if (ratio == 0.0) return s;
  std::bernoulli_distribution drop(ratio);
  std::vector<Edge> kept;
  for (const Edge& e : s.adjacency.edges())
    if (!drop(rng)) kept.push_back(e);
  SubgraphSample out = s;
  out.adjacency = SparseAdjacency::from_undirected_edges(s.n(), kept);
  return out;
}

struct MaskedSample {
  SubgraphSample sample;
  std::vector<bool> mask_rows;
};

/// floor(ratio * n) rows (at least one when ratio > 0) chosen uniformly and
/// zeroed.
inline MaskedSample mask_features(const SubgraphSample& s, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("mask_features: ratio outside [0,1)");
  MaskedSample out{s, std::vector<bool>(s.n(), false)};
  if (ratio == 0.0 || s.n() == 0) return out;
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(s.n()))));
  std::vector<std::size_t> rows(s.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  std::sample(rows.begin(), rows.end(), std::back_inserter(chosen), count, rng);
  for (std::size_t r : chosen) {
    out.mask_rows[r] = true;
    for (double& x : out.sample.features.row(r)) x = 0.0;
  }
  return out;
}

/// Feature rows permuted uniformly at random; topology unchanged.
inline SubgraphSample shuffle_features(const SubgraphSample& s, Rng& rng) {
  std::vector<std::size_t> perm(s.n());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  SubgraphSample out = s;
  for (std::size_t i = 0; i < s.n(); ++i) {
    auto src = s.features.row(perm[i]);
    std::copy(src.begin(), src.end(), out.features.row(i).begin());
  }
  return out;
}

}  // namespace mtgrl
