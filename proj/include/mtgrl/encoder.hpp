#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/numcore/sparse_adjacency.hpp"
#include "mtgrl/numcore/tape.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

enum class AdjacencyMode {
  Raw,      // A as stored
  SymNorm,  // D^{-1/2} (A + I) D^{-1/2}
};

inline constexpr double kPReLUSlope = 0.25;

/// Shared GCN weights. dims = [D, d1, ..., dL]; layer l maps d_l -> d_{l+1}.
struct EncoderParams {
  std::vector<std::size_t> dims;
  std::vector<DenseMatrix> weights;

  /// Glorot-uniform weights, seeded.
  static EncoderParams init(std::vector<std::size_t> dims, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("encoder needs at least one layer");
    EncoderParams p;
    p.dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < p.dims.size(); ++l) {
      const std::size_t fan_in = p.dims[l];
      const std::size_t fan_out = p.dims[l + 1];
      if (fan_in == 0 || fan_out == 0) throw ConfigError("encoder dims must be positive");
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Rng rng = make_stream({seed, stream::kInit, l});
      std::uniform_real_distribution<double> u(-bound, bound);
      DenseMatrix w(fan_in, fan_out);
      for (double& x : w.data()) x = u(rng);
      p.weights.push_back(std::move(w));
    }
    return p;
  }

  std::size_t layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const noexcept { return dims.front(); }
  std::size_t output_dim() const noexcept { return dims.back(); }

  /// Total number of shared parameters.
  std::size_t census() const noexcept {
    std::size_t total = 0;
    for (const auto& w : weights) total += w.size();
    return total;
  }

  void validate() const {
    if (weights.size() + 1 != dims.size()) throw ContractError("encoder dims/weights mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != dims[l] || weights[l].cols() != dims[l + 1]) {
        throw DimensionError("encoder layer " + std::to_string(l) + " has shape " +
                             weights[l].shape_string());
      }
      if (!all_finite(weights[l])) throw NumericError("encoder weights are not finite");
    }
  }

  static std::string weight_name(std::size_t layer) { return "W" + std::to_string(layer); }

  bool operator==(const EncoderParams&) const = default;
};

/// Encoder gradient flattened layer-major, each layer row-major.
struct FlatGradient {
  std::vector<double> data;

  std::size_t size() const noexcept { return data.size(); }
  bool operator==(const FlatGradient&) const = default;
};

inline FlatGradient flatten(std::span<const DenseMatrix> grads, const EncoderParams& params) {
  if (grads.size() != params.weights.size()) {
    throw ContractError("flatten: expected " + std::to_string(params.weights.size()) +
                        " layer gradients");
  }
  FlatGradient flat;
  flat.data.reserve(params.census());
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (!grads[l].same_shape(params.weights[l])) {
      throw ContractError("flatten: layer " + std::to_string(l) + " gradient has shape " +
                          grads[l].shape_string());
    }
    flat.data.insert(flat.data.end(), grads[l].data().begin(), grads[l].data().end());
  }
  return flat;
}

inline std::vector<DenseMatrix> unflatten(const FlatGradient& flat, const EncoderParams& params) {
  if (flat.size() != params.census()) {
    throw ContractError("unflatten: length " + std::to_string(flat.size()) + " != census " +
                        std::to_string(params.census()));
  }
  std::vector<DenseMatrix> out;
  std::size_t offset = 0;
  for (const auto& w : params.weights) {
    std::vector<double> chunk(flat.data.begin() + static_cast<std::ptrdiff_t>(offset),
                              flat.data.begin() + static_cast<std::ptrdiff_t>(offset + w.size()));
    out.emplace_back(w.rows(), w.cols(), std::move(chunk));
    offset += w.size();
  }
  return out;
}

inline std::shared_ptr<const SparseAdjacency> propagation_matrix(const SparseAdjacency& a,
                                                                 AdjacencyMode mode) {
  if (mode == AdjacencyMode::Raw) return std::make_shared<const SparseAdjacency>(a);
  return std::make_shared<const SparseAdjacency>(a.sym_normalized_with_self_loops());
}

/// Registers the encoder weights as tape parameters W0..W{L-1}. A prefix keeps
/// names apart when one tape holds several parameter sets.
inline std::vector<Var> bind_encoder(Tape& tape, const EncoderParams& params,
                                     const std::string& prefix = "") {
  std::vector<Var> vars;
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    vars.push_back(tape.parameter(prefix + EncoderParams::weight_name(l), params.weights[l]));
  return vars;
}

/// H^{l+1} = PReLU(P H^l W^l) for every layer, including the last.
inline Var encode_on_tape(Tape& tape, const std::shared_ptr<const SparseAdjacency>& propagation,
                          Var features, std::span<const Var> weights) {
  Var h = features;
  for (Var w : weights) h = tape.prelu(tape.matmul(tape.spmm(propagation, h), w), kPReLUSlope);
  return h;
}

/// Node representations of a sample (no gradients).
inline DenseMatrix encode(const SubgraphSample& g, const EncoderParams& params,
                          AdjacencyMode mode = AdjacencyMode::SymNorm) {
  params.validate();
  if (g.features.cols() != params.input_dim()) {
    throw ContractError("encode: feature dim " + std::to_string(g.features.cols()) +
                        " != encoder input dim " + std::to_string(params.input_dim()));
  }
  Tape tape;
  const Var x = tape.input("X", g.features);
  const auto weights = bind_encoder(tape, params);
  return tape.value(encode_on_tape(tape, propagation_matrix(g.adjacency, mode), x, weights));
}

inline DenseMatrix encode(const Graph& g, const EncoderParams& params,
                          AdjacencyMode mode = AdjacencyMode::SymNorm) {
  return encode(full_sample(g), params, mode);
}

}  // namespace mtgrl
