#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                 double lo = -2.0, double hi = 2.0) {
  Rng rng = make_stream({seed, 0xbeef});
  std::uniform_real_distribution<double> u(lo, hi);
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = u(rng);
  return m;
}

inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_stream({seed, 0xfeed});
  std::normal_distribution<double> n(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = n(rng);
  return m;
}

inline std::vector<Edge> cycle_edges(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  e.emplace_back(0, n - 1);
  return e;
}

inline std::vector<Edge> clique_edges(std::size_t begin, std::size_t end) {
  std::vector<Edge> e;
  for (std::size_t u = begin; u < end; ++u)
    for (std::size_t v = u + 1; v < end; ++v) e.emplace_back(u, v);
  return e;
}

inline Graph graph_with_features(std::size_t n, const std::vector<Edge>& edges,
                                 std::size_t feature_dim, std::uint64_t seed) {
  return Graph::from_edges(n, edges, random_matrix(n, feature_dim, seed, -1.0, 1.0), std::nullopt);
}

}  // namespace mtgrl::testing
