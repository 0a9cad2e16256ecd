#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

struct SbmParams {
  std::size_t blocks = 3;
  std::size_t nodes = 600;
  double p_intra = 0.05;
  double p_inter = 0.005;
  std::size_t feature_dim = 16;
  double feature_noise = 0.5;
};

/// Stochastic block model. Node i belongs to block i mod B; each unordered
/// pair is an edge independently with p_intra or p_inter. Node features are
/// the block's unit axis e_(b mod D) plus isotropic Gaussian noise.
inline Graph generate_sbm(std::uint64_t seed, const SbmParams& p) {
  if (p.blocks < 2) throw ConfigError("generate_sbm: need at least 2 blocks");
  if (p.nodes < p.blocks) throw ConfigError("generate_sbm: nodes must be >= blocks");
  if (!(p.p_intra >= 0.0 && p.p_intra <= 1.0) || !(p.p_inter >= 0.0 && p.p_inter <= 1.0)) {
    throw ConfigError("generate_sbm: probabilities must lie in [0,1]");
  }
  if (p.feature_dim == 0) throw ConfigError("generate_sbm: feature_dim must be positive");
  if (!(p.feature_noise >= 0.0)) throw ConfigError("generate_sbm: feature_noise must be >= 0");

  Rng rng = make_stream({seed});
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> labels(p.nodes);
  for (std::size_t i = 0; i < p.nodes; ++i) labels[i] = static_cast<int>(i % p.blocks);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < p.nodes; ++u) {
    for (std::size_t v = u + 1; v < p.nodes; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_intra : p.p_inter;
      if (coin(rng) < prob) edges.emplace_back(u, v);
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  DenseMatrix features(p.nodes, p.feature_dim);
  for (std::size_t i = 0; i < p.nodes; ++i) {
    features(i, static_cast<std::size_t>(labels[i]) % p.feature_dim) = 1.0;
    if (p.feature_noise > 0.0)
      for (double& x : features.row(i)) x += p.feature_noise * noise(rng);
  }
  return Graph::from_edges(p.nodes, edges, std::move(features), std::move(labels));
}

}  // namespace mtgrl
