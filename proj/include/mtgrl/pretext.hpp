#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "mtgrl/encoder.hpp"
#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/graphstore/sampling.hpp"
#include "mtgrl/numcore/tape.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

enum class TaskId : std::size_t { FeatRec = 0, TopoRec = 1, RepDecor = 2, MiNg = 3, MiNsg = 4 };

inline constexpr std::size_t kTaskCount = 5;
inline constexpr std::array<TaskId, kTaskCount> kAllTasks = {
    TaskId::FeatRec, TaskId::TopoRec, TaskId::RepDecor, TaskId::MiNg, TaskId::MiNsg};

inline constexpr std::size_t index_of(TaskId t) noexcept { return static_cast<std::size_t>(t); }

inline const char* task_name(TaskId t) noexcept {
  switch (t) {
    case TaskId::FeatRec: return "featrec";
    case TaskId::TopoRec: return "toporec";
    case TaskId::RepDecor: return "repdecor";
    case TaskId::MiNg: return "ming";
    case TaskId::MiNsg: return "minsg";
  }
  return "?";
}

inline std::optional<TaskId> parse_task(std::string_view name) {
  for (TaskId t : kAllTasks)
    if (name == task_name(t)) return t;
  return std::nullopt;
}

/// Only FeatRec, TopoRec and MI-NG own task-specific parameters.
inline bool task_has_head(TaskId t) noexcept {
  return t == TaskId::FeatRec || t == TaskId::TopoRec || t == TaskId::MiNg;
}

struct TaskHeads {
  DenseMatrix feat_decoder;  // d x D
  DenseMatrix topo_scorer;   // d x 1
  DenseMatrix ming_scorer;   // 2d x 1

  static TaskHeads init(std::size_t d, std::size_t feature_dim, std::uint64_t seed) {
    auto glorot = [seed](std::size_t rows, std::size_t cols, std::uint64_t salt) {
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      Rng rng = make_stream({seed, stream::kInit, 1000 + salt});
      std::uniform_real_distribution<double> u(-bound, bound);
      DenseMatrix w(rows, cols);
      for (double& x : w.data()) x = u(rng);
      return w;
    };
    return TaskHeads{glorot(d, feature_dim, 0), glorot(d, 1, 1), glorot(2 * d, 1, 2)};
  }

  void validate(std::size_t d, std::size_t feature_dim) const {
    if (feat_decoder.rows() != d || feat_decoder.cols() != feature_dim ||
        topo_scorer.rows() != d || topo_scorer.cols() != 1 || ming_scorer.rows() != 2 * d ||
        ming_scorer.cols() != 1) {
      throw DimensionError("task heads do not match encoder output dim " + std::to_string(d) +
                           " and feature dim " + std::to_string(feature_dim));
    }
  }

  DenseMatrix& head_of(TaskId t) {
    switch (t) {
      case TaskId::FeatRec: return feat_decoder;
      case TaskId::TopoRec: return topo_scorer;
      case TaskId::MiNg: return ming_scorer;
      default: throw ContractError(std::string("task ") + task_name(t) + " has no head");
    }
  }
  const DenseMatrix& head_of(TaskId t) const { return const_cast<TaskHeads&>(*this).head_of(t); }

  bool operator==(const TaskHeads&) const = default;
};

struct TaskConfig {
  std::array<AugmentationSpec, kTaskCount> augment;
  std::size_t topo_batch = 256;  // B positive and B negative pairs
  double temperature = 0.1;
  double decor_balance = 1e-3;
  AdjacencyMode adjacency_mode = AdjacencyMode::SymNorm;

  TaskConfig() {
    augment[index_of(TaskId::FeatRec)] = {SamplerKind::Full, 0, std::nullopt, 0.5, 0.35};
    augment[index_of(TaskId::TopoRec)] = {SamplerKind::KHop, 2, 0.5, 0.0, 0.0};
    augment[index_of(TaskId::RepDecor)] = {SamplerKind::UniformNodes, 0, 0.5, 0.2, 0.2};
    augment[index_of(TaskId::MiNg)] = {SamplerKind::KHop, 2, 0.5, 0.0, 0.0};
    augment[index_of(TaskId::MiNsg)] = {SamplerKind::KHop, 1, 0.04, 0.2, 0.2};
  }

  const AugmentationSpec& spec(TaskId t) const { return augment[index_of(t)]; }
  AugmentationSpec& spec(TaskId t) { return augment[index_of(t)]; }

  void validate() const {
    for (const auto& a : augment) a.validate();
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(decor_balance >= 0.0)) throw ConfigError("decor_balance must be >= 0");
    if (topo_batch < 1) throw ConfigError("topo_batch must be >= 1");
    if (!(spec(TaskId::FeatRec).feature_mask_ratio > 0.0)) {
      throw ConfigError("featrec mask ratio must be > 0");
    }
  }
};

struct TaskLossResult {
  TaskId task = TaskId::FeatRec;
  double loss = 0.0;
  FlatGradient shared_grad;
  std::optional<DenseMatrix> head_grad;  // present iff task_has_head(task)
};

// --- objectives on a tape ---------------------------------------------------

/// ||(recon - target) (.) M||_F / ||target (.) M||_F over the masked rows.
inline Var featrec_objective(Tape& tape, Var reconstruction, const DenseMatrix& target,
                             const std::vector<bool>& mask_rows) {
  if (mask_rows.size() != target.rows()) throw DimensionError("featrec: mask length mismatch");
  DenseMatrix row_mask(target.rows(), target.cols());
  for (std::size_t i = 0; i < target.rows(); ++i)
    if (mask_rows[i])
      for (double& x : row_mask.row(i)) x = 1.0;
  DenseMatrix masked_target = target;
  for (std::size_t i = 0; i < target.size(); ++i) masked_target[i] *= row_mask[i];
  const double denom = mtgrl::frobenius_norm(masked_target);
  if (!(denom > 0.0)) {
    throw DegenerateTargetError("featrec: masked target features are all zero");
  }
  const Var diff = tape.sub(reconstruction, tape.constant(target));
  return tape.scale(tape.frobenius_norm(tape.mul_const(diff, std::move(row_mask))), 1.0 / denom);
}

/// Binary cross-entropy with positives labelled 1 and negatives 0, averaged
/// over all pairs: (sum softplus(-pos) + sum softplus(neg)) / (|pos| + |neg|).
inline Var pair_bce_objective(Tape& tape, Var pos_logits, Var neg_logits) {
  const double count =
      static_cast<double>(tape.value(pos_logits).size() + tape.value(neg_logits).size());
  const Var pos = tape.sum(tape.softplus(tape.scale(pos_logits, -1.0)));
  const Var neg = tape.sum(tape.softplus(neg_logits));
  return tape.scale(tape.add(pos, neg), 1.0 / count);
}

/// ||Z1 - Z2||_F + lambda ||Z1^T Z2 - I||_F for already whitened Z1, Z2.
inline Var decor_objective(Tape& tape, Var z1, Var z2, double lambda) {
  const std::size_t d = tape.value(z1).cols();
  const Var agreement = tape.frobenius_norm(tape.sub(z1, z2));
  const Var cov = tape.matmul_tn(z1, z2);
  const Var decor = tape.frobenius_norm(tape.sub(cov, tape.constant(DenseMatrix::identity(d))));
  return tape.add(agreement, tape.scale(decor, lambda));
}

/// Mean over anchors i of -log(num_i / den_i) with cosine similarities,
/// num_i = exp(s(h1_i, h2_i)/tau),
/// den_i = sum_{j != i} exp(s(h1_i, h1_j)/tau) + sum_j exp(s(h1_i, h2_j)/tau).
inline Var infonce_objective(Tape& tape, Var h1, Var h2, double tau) {
  const std::size_t n = tape.value(h1).rows();
  if (tape.value(h2).rows() != n) throw DimensionError("infonce: views differ in row count");
  const Var n1 = tape.row_l2_normalize(h1);
  const Var n2 = tape.row_l2_normalize(h2);
  const Var intra = tape.scale(tape.matmul_nt(n1, n1), 1.0 / tau);
  const Var cross = tape.scale(tape.matmul_nt(n1, n2), 1.0 / tau);
  DenseMatrix off_diagonal(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diagonal(i, i) = 0.0;
  const Var denom = tape.add(tape.row_sum(tape.mul_const(tape.exp(intra), std::move(off_diagonal))),
                             tape.row_sum(tape.exp(cross)));
  const Var positive = tape.row_sum(tape.mul_const(cross, DenseMatrix::identity(n)));
  return tape.scale(tape.sum(tape.sub(tape.log(denom), positive)), 1.0 / static_cast<double>(n));
}

// --- prepared batches -------------------------------------------------------

/// FeatRec input: the edge-dropped sample with intact features plus the rows
/// to hide and reconstruct.
struct FeatRecBatch {
  SubgraphSample sample;
  std::vector<bool> mask_rows;

  bool operator==(const FeatRecBatch&) const = default;
};

struct TopoRecBatch {
  SubgraphSample sample;
  std::vector<Edge> positives;
  std::vector<Edge> negatives;

  bool operator==(const TopoRecBatch&) const = default;
};

/// Two augmentations of one node set (RepDecor, MI-NSG).
struct TwoViewBatch {
  SubgraphSample view1;
  SubgraphSample view2;

  bool operator==(const TwoViewBatch&) const = default;
};

struct MiNgBatch {
  SubgraphSample clean;
  SubgraphSample corrupted;

  bool operator==(const MiNgBatch&) const = default;
};

/// Everything random about one task evaluation, fixed up front so the loss
/// is a deterministic function of the parameters.
struct TaskBatch {
  TaskId task = TaskId::FeatRec;
  std::variant<FeatRecBatch, TopoRecBatch, TwoViewBatch, MiNgBatch> data;
};

namespace pretext_detail {

inline void check_input_dim(const SubgraphSample& s, const EncoderParams& params) {
  if (s.features.cols() != params.input_dim()) {
    throw ContractError("sample feature dim " + std::to_string(s.features.cols()) +
                        " != encoder input dim " + std::to_string(params.input_dim()));
  }
}

inline void check_same_nodes(const SubgraphSample& a, const SubgraphSample& b) {
  if (a.node_ids != b.node_ids) throw ContractError("two-view task: views have different nodes");
}

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> endpoints(
    const std::vector<Edge>& pos, const std::vector<Edge>& neg) {
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  for (const auto* list : {&pos, &neg}) {
    for (auto [u, v] : *list) {
      left.push_back(u);
      right.push_back(v);
    }
  }
  return {std::move(left), std::move(right)};
}

inline Var whitened(Tape& tape, Var h) {
  const double rows = static_cast<double>(tape.value(h).rows());
  return tape.scale(tape.col_standardize(h), 1.0 / std::sqrt(rows));
}

}  // namespace pretext_detail

/// Loss tape of one prepared batch. Encoder weights are parameters W0..,
/// the task head (if any) is parameter "head".
struct TaskTape {
  Tape tape;
  std::vector<Var> weights;
  std::optional<Var> head;
  Var loss;
};

inline TaskTape build_task_tape(const TaskBatch& batch, const EncoderParams& params,
                                const TaskHeads& heads, const TaskConfig& cfg) {
  using namespace pretext_detail;
  TaskTape tt;
  Tape& tape = tt.tape;
  tt.weights = bind_encoder(tape, params);
  const auto mode = cfg.adjacency_mode;

  switch (batch.task) {
    case TaskId::FeatRec: {
      const auto& b = std::get<FeatRecBatch>(batch.data);
      check_input_dim(b.sample, params);
      if (b.mask_rows.size() != b.sample.n()) throw DimensionError("featrec: mask length");
      DenseMatrix masked_input = b.sample.features;
      DenseMatrix keep(b.sample.n(), params.output_dim(), 1.0);
      for (std::size_t i = 0; i < b.sample.n(); ++i) {
        if (!b.mask_rows[i]) continue;
        for (double& x : masked_input.row(i)) x = 0.0;
        for (double& x : keep.row(i)) x = 0.0;
      }
      const auto prop = propagation_matrix(b.sample.adjacency, mode);
      const Var h = encode_on_tape(tape, prop, tape.input("X", std::move(masked_input)), tt.weights);
      // Re-mask: the hidden rows must be rebuilt from their neighbours.
      const Var remasked = tape.mul_const(h, std::move(keep));
      tt.head = tape.parameter("head", heads.feat_decoder);
      const Var recon = tape.spmm(prop, tape.matmul(remasked, *tt.head));
      tt.loss = featrec_objective(tape, recon, b.sample.features, b.mask_rows);
      break;
    }
    case TaskId::TopoRec: {
      const auto& b = std::get<TopoRecBatch>(batch.data);
      check_input_dim(b.sample, params);
      const auto prop = propagation_matrix(b.sample.adjacency, mode);
      const Var h = encode_on_tape(tape, prop, tape.input("X", b.sample.features), tt.weights);
      auto [left, right] = endpoints(b.positives, b.negatives);
      const Var pair = tape.hadamard(tape.gather_rows(h, std::move(left)),
                                     tape.gather_rows(h, std::move(right)));
      tt.head = tape.parameter("head", heads.topo_scorer);
      const Var logits = tape.matmul(pair, *tt.head);
      std::vector<std::size_t> pos_rows(b.positives.size());
      std::vector<std::size_t> neg_rows(b.negatives.size());
      for (std::size_t i = 0; i < pos_rows.size(); ++i) pos_rows[i] = i;
      for (std::size_t i = 0; i < neg_rows.size(); ++i) neg_rows[i] = pos_rows.size() + i;
      tt.loss = pair_bce_objective(tape, tape.gather_rows(logits, std::move(pos_rows)),
                                   tape.gather_rows(logits, std::move(neg_rows)));
      break;
    }
    case TaskId::RepDecor:
    case TaskId::MiNsg: {
      const auto& b = std::get<TwoViewBatch>(batch.data);
      check_same_nodes(b.view1, b.view2);
      check_input_dim(b.view1, params);
      if (batch.task == TaskId::MiNsg && b.view1.n() < 2) {
        throw ContractError("minsg: needs at least 2 nodes");
      }
      const Var h1 = encode_on_tape(tape, propagation_matrix(b.view1.adjacency, mode),
                                    tape.input("X1", b.view1.features), tt.weights);
      const Var h2 = encode_on_tape(tape, propagation_matrix(b.view2.adjacency, mode),
                                    tape.input("X2", b.view2.features), tt.weights);
      if (batch.task == TaskId::RepDecor) {
        tt.loss = decor_objective(tape, whitened(tape, h1), whitened(tape, h2), cfg.decor_balance);
      } else {
        tt.loss = infonce_objective(tape, h1, h2, cfg.temperature);
      }
      break;
    }
    case TaskId::MiNg: {
      const auto& b = std::get<MiNgBatch>(batch.data);
      check_same_nodes(b.clean, b.corrupted);
      check_input_dim(b.clean, params);
      const std::size_t n = b.clean.n();
      if (n < 2) throw ContractError("ming: needs at least 2 nodes");
      const auto prop = propagation_matrix(b.clean.adjacency, mode);
      const Var h = encode_on_tape(tape, prop, tape.input("X", b.clean.features), tt.weights);
      const Var hc =
          encode_on_tape(tape, prop, tape.input("X_corrupt", b.corrupted.features), tt.weights);
      const Var summary = tape.repeat_rows(tape.mean_rows(h), n);
      tt.head = tape.parameter("head", heads.ming_scorer);
      const Var clean_logits = tape.matmul(tape.hconcat(h, summary), *tt.head);
      const Var corrupt_logits = tape.matmul(tape.hconcat(hc, summary), *tt.head);
      tt.loss = pair_bce_objective(tape, clean_logits, corrupt_logits);
      break;
    }
  }
  tape.set_root(tt.loss);
  return tt;
}

/// Loss value and gradients of a prepared batch.
inline TaskLossResult evaluate_task(const TaskBatch& batch, const EncoderParams& params,
                                    const TaskHeads& heads, const TaskConfig& cfg) {
  TaskTape tt = build_task_tape(batch, params, heads, cfg);
  auto grads = tt.tape.backward();
  std::vector<DenseMatrix> layer_grads;
  for (std::size_t l = 0; l < params.layers(); ++l)
    layer_grads.push_back(std::move(grads.at(EncoderParams::weight_name(l))));
  TaskLossResult result;
  result.task = batch.task;
  result.loss = tt.tape.value(tt.loss).item();
  result.shared_grad = flatten(layer_grads, params);
  if (tt.head) result.head_grad = std::move(grads.at("head"));
  return result;
}

/// Loss value only.
inline double task_loss_value(const TaskBatch& batch, const EncoderParams& params,
                              const TaskHeads& heads, const TaskConfig& cfg) {
  TaskTape tt = build_task_tape(batch, params, heads, cfg);
  return tt.tape.value(tt.loss).item();
}

// --- sampling ---------------------------------------------------------------

/// Edge dropping followed by feature masking.
inline SubgraphSample augment(const SubgraphSample& s, const AugmentationSpec& spec, Rng& rng) {
  SubgraphSample out = drop_edges(s, spec.edge_drop_ratio, rng);
  if (spec.feature_mask_ratio > 0.0) out = mask_features(out, spec.feature_mask_ratio, rng).sample;
  return out;
}

/// B edges and B non-edges of the sample. Edges are drawn without
/// replacement when enough exist; non-edges by rejection, capped at 100 B
/// trials.
inline TopoRecBatch sample_topo_pairs(const SubgraphSample& s, std::size_t pairs, Rng& rng) {
  const std::vector<Edge> edges = s.adjacency.edges();
  const std::size_t n = s.n();
  const std::size_t possible = n * (n - (n > 0 ? 1 : 0)) / 2;
  if (edges.empty()) throw SamplingError("toporec: sample has no edges");
  if (edges.size() >= possible) throw SamplingError("toporec: sample is a complete graph");
  TopoRecBatch b;
  b.sample = s;
  if (pairs <= edges.size()) {
    std::sample(edges.begin(), edges.end(), std::back_inserter(b.positives), pairs, rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    for (std::size_t i = 0; i < pairs; ++i) b.positives.push_back(edges[pick(rng)]);
  }
  std::uniform_int_distribution<std::size_t> node(0, n - 1);
  const std::size_t max_trials = 100 * pairs;
  std::size_t trials = 0;
  while (b.negatives.size() < pairs) {
    if (trials++ >= max_trials) throw SamplingError("toporec: non-edge sampling exhausted");
    std::size_t u = node(rng);
    std::size_t v = node(rng);
    if (u == v || s.adjacency.has_edge(u, v)) continue;
    if (u > v) std::swap(u, v);
    b.negatives.emplace_back(u, v);
  }
  return b;
}

/// Samples and augments the graph for one task and fixes every random choice.
inline TaskBatch prepare_task(TaskId task, const Graph& g, const TaskConfig& cfg, Rng& rng) {
  const AugmentationSpec& spec = cfg.spec(task);
  const SubgraphSample base = sample_subgraph(g, spec, rng);
  switch (task) {
    case TaskId::FeatRec: {
      if (!(spec.feature_mask_ratio > 0.0)) throw ContractError("featrec: mask ratio must be > 0");
      SubgraphSample s = drop_edges(base, spec.edge_drop_ratio, rng);
      auto mask = mask_features(s, spec.feature_mask_ratio, rng).mask_rows;
      return {task, FeatRecBatch{std::move(s), std::move(mask)}};
    }
    case TaskId::TopoRec:
      return {task, sample_topo_pairs(augment(base, spec, rng), cfg.topo_batch, rng)};
    case TaskId::RepDecor:
    case TaskId::MiNsg: {
      SubgraphSample v1 = augment(base, spec, rng);
      SubgraphSample v2 = augment(base, spec, rng);
      return {task, TwoViewBatch{std::move(v1), std::move(v2)}};
    }
    case TaskId::MiNg: {
      SubgraphSample clean = augment(base, spec, rng);
      SubgraphSample corrupted = shuffle_features(clean, rng);
      return {task, MiNgBatch{std::move(clean), std::move(corrupted)}};
    }
  }
  throw ContractError("prepare_task: unknown task");
}

// --- per-task loss entry points ----------------------------------------------

inline TaskLossResult feat_rec_loss(const SubgraphSample& g, const EncoderParams& params,
                                    const TaskHeads& heads, const TaskConfig& cfg, Rng& rng) {
  const double ratio = cfg.spec(TaskId::FeatRec).feature_mask_ratio;
  if (!(ratio > 0.0)) throw ContractError("featrec: mask ratio must be > 0");
  auto mask = mask_features(g, ratio, rng).mask_rows;
  return evaluate_task({TaskId::FeatRec, FeatRecBatch{g, std::move(mask)}}, params, heads, cfg);
}

inline TaskLossResult topo_rec_loss(const SubgraphSample& g, const EncoderParams& params,
                                    const TaskHeads& heads, const TaskConfig& cfg, Rng& rng) {
  return evaluate_task({TaskId::TopoRec, sample_topo_pairs(g, cfg.topo_batch, rng)}, params,
                       heads, cfg);
}

inline TaskLossResult rep_decor_loss(const SubgraphSample& g1, const SubgraphSample& g2,
                                     const EncoderParams& params, const TaskHeads& heads,
                                     const TaskConfig& cfg) {
  return evaluate_task({TaskId::RepDecor, TwoViewBatch{g1, g2}}, params, heads, cfg);
}

inline TaskLossResult mi_ng_loss(const SubgraphSample& g, const EncoderParams& params,
                                 const TaskHeads& heads, const TaskConfig& cfg, Rng& rng) {
  return evaluate_task({TaskId::MiNg, MiNgBatch{g, shuffle_features(g, rng)}}, params, heads, cfg);
}

inline TaskLossResult mi_nsg_loss(const SubgraphSample& g1, const SubgraphSample& g2,
                                  const EncoderParams& params, const TaskHeads& heads,
                                  const TaskConfig& cfg) {
  return evaluate_task({TaskId::MiNsg, TwoViewBatch{g1, g2}}, params, heads, cfg);
}

inline TaskLossResult run_task(TaskId task, const Graph& g, const EncoderParams& params,
                               const TaskHeads& heads, const TaskConfig& cfg, Rng& rng) {
  return evaluate_task(prepare_task(task, g, cfg, rng), params, heads, cfg);
}

}  // namespace mtgrl
