#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtgrl/checkpoint.hpp"
#include "mtgrl/config.hpp"
#include "mtgrl/encoder.hpp"
#include "mtgrl/evalharness.hpp"
#include "mtgrl/graphstore.hpp"
#include "mtgrl/numcore/gradcheck.hpp"
#include "mtgrl/pareto.hpp"
#include "mtgrl/pretext.hpp"
#include "mtgrl/trainer.hpp"

namespace mtgrl {

namespace fs = std::filesystem;

// --- gradient checks ---------------------------------------------------------------

/// Small labelled graph used by the gradient checks.
inline Graph gradcheck_graph(std::uint64_t seed, const CheckgradConfig& cg) {
  return generate_sbm(seed, SbmParams{2, cg.nodes, 0.5, 0.1, cg.feature_dim, 0.5});
}

/// Task settings for the gradient checks: whole-graph samples, so n stays at
/// cg.nodes.
inline TaskConfig gradcheck_task_config(const TaskConfig& base) {
  TaskConfig cfg = base;
  for (auto& spec : cfg.augment) {
    spec.sampler = SamplerKind::Full;
    spec.seed_fraction.reset();
  }
  cfg.topo_batch = 8;
  return cfg;
}

/// Worst relative finite-difference error over the encoder weights and the
/// task head of one task on one random graph.
inline double task_gradcheck(TaskId task, std::uint64_t seed, const CheckgradConfig& cg,
                             const TaskConfig& base = {}, std::optional<Op> fault = {}) {
  const TaskConfig cfg = gradcheck_task_config(base);
  std::vector<std::size_t> dims{cg.feature_dim};
  dims.insert(dims.end(), cg.hidden_dims.begin(), cg.hidden_dims.end());
  const auto params = EncoderParams::init(dims, seed);
  const auto heads = TaskHeads::init(params.output_dim(), cg.feature_dim, seed);
  // Retry on a fresh graph when a draw cannot host the task (e.g. no non-edge).
  for (std::uint64_t attempt = 0;; ++attempt) {
    try {
      const Graph g = gradcheck_graph(seed * 7919 + attempt, cg);
      Rng rng = make_stream({seed, stream::kTask, index_of(task), attempt});
      TaskTape tt = build_task_tape(prepare_task(task, g, cfg, rng), params, heads, cfg);
      if (fault) tt.tape.inject_adjoint_fault(*fault, 1.5);
      return finite_diff_check_all(tt.tape, cg.step);
    } catch (const SamplingError&) {
      if (attempt >= 10) throw;
    }
  }
}

/// Encoder alone: loss = sum(H (.) R) for a fixed random R.
inline double encoder_gradcheck(std::uint64_t seed, const CheckgradConfig& cg,
                                std::optional<Op> fault = {}) {
  const Graph g = gradcheck_graph(seed * 7919, cg);
  std::vector<std::size_t> dims{cg.feature_dim};
  dims.insert(dims.end(), cg.hidden_dims.begin(), cg.hidden_dims.end());
  const auto params = EncoderParams::init(dims, seed);
  Tape tape;
  const auto weights = bind_encoder(tape, params);
  const Var h = encode_on_tape(tape, propagation_matrix(g.adjacency, AdjacencyMode::SymNorm),
                               tape.input("X", g.features), weights);
  DenseMatrix r(g.n(), params.output_dim());
  Rng rng = make_stream({seed, stream::kInit, 99});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : r.data()) x = normal(rng);
  tape.set_root(tape.sum(tape.mul_const(h, std::move(r))));
  if (fault) tape.inject_adjoint_fault(*fault, 1.5);
  return finite_diff_check_all(tape, cg.step);
}

struct CheckgradRow {
  std::string name;
  double worst = 0.0;
  bool pass = false;
};

/// One row per pretext task, each the worst error over cg.trials seeds.
inline std::vector<CheckgradRow> run_checkgrad(const RunConfig& cfg, std::optional<Op> fault = {}) {
  std::vector<CheckgradRow> rows;
  for (TaskId t : kAllTasks) {
    CheckgradRow row{task_name(t), 0.0, false};
    for (std::size_t i = 0; i < cfg.checkgrad.trials; ++i) {
      const double e =
          task_gradcheck(t, cfg.train.seed * 1000 + i, cfg.checkgrad, cfg.train.task, fault);
      row.worst = std::max(row.worst, e);
    }
    row.pass = row.worst < cfg.checkgrad.tolerance;
    rows.push_back(row);
  }
  return rows;
}

// --- solve ---------------------------------------------------------------------------

/// First line `K P`, then K lines of P numbers.
inline TaskGradientMatrix read_gradient_file(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw FormatError(file.string() + ": cannot open gradient file");
  std::size_t k = 0;
  std::size_t p = 0;
  if (!(is >> k >> p)) throw FormatError(file.string() + ":1: expected 'K P'");
  if (k == 0 || p == 0) throw FormatError(file.string() + ":1: K and P must be positive");
  DenseMatrix g(k, p);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < p; ++c)
      if (!(is >> g(r, c))) {
        throw FormatError(file.string() + ":" + std::to_string(r + 2) + ": expected " +
                          std::to_string(p) + " numbers");
      }
  std::string extra;
  if (is >> extra) throw FormatError(file.string() + ": trailing content '" + extra + "'");
  return TaskGradientMatrix(std::move(g));
}

inline nlohmann::json solve_to_json(const TaskGradientMatrix& g, const FrankWolfeOptions& opt) {
  const MinNormSolution sol = frank_wolfe_min_norm(g, opt);
  nlohmann::json j;
  j["alpha"] = sol.alpha.weights;
  j["phi"] = simplex_objective(g, sol.alpha);
  j["iterations"] = sol.trace.count();
  j["residual"] = saddle_point_residual(g, sol.alpha);
  j["termination"] = termination_name(sol.trace.termination);
  j["polished"] = sol.trace.polished;
  return j;
}

// --- train -----------------------------------------------------------------------------

inline fs::path link_checkpoint_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".link.bin");
  return p;
}

struct TrainOutputs {
  fs::path checkpoint;
  fs::path link_checkpoint;
  fs::path steps_csv;
};

/// Trains on the graph and, for link prediction, a second model on the
/// train-edge-only graph of the evaluation edge split.
inline TrainOutputs cmd_train(const RunConfig& cfg, const Graph& g, const fs::path& out) {
  fs::create_directories(out);
  {
    std::ofstream os(out / "config.txt", std::ios::binary);
    os << config_to_text(cfg);
  }
  auto run = [&](const Graph& graph, const fs::path& csv, const fs::path& ck) {
    std::ofstream os(csv, std::ios::binary);
    if (!os) throw FormatError(csv.string() + ": cannot open for writing");
    write_step_csv_header(os);
    const TrainResult r =
        train_run(graph, cfg.train, [&](const StepRecord& rec) { write_step_csv_row(os, rec); });
    save_checkpoint({r.state.params, r.state.heads}, ck);
  };
  TrainOutputs o{out / "checkpoint.bin", out / "checkpoint.link.bin", out / "steps.csv"};
  run(g, o.steps_csv, o.checkpoint);
  const EdgeSplit split = split_edges(g, cfg.eval.edge_split, cfg.eval.split_seed);
  run(split.train_graph, out / "steps.link.csv", o.link_checkpoint);
  return o;
}

// --- embed / eval -------------------------------------------------------------------------

inline DenseMatrix embed_with(const Checkpoint& ck, const Graph& g, AdjacencyMode mode) {
  if (ck.params.input_dim() != g.feature_dim()) {
    throw DimensionError("checkpoint expects feature dim " + std::to_string(ck.params.input_dim()) +
                         ", graph has " + std::to_string(g.feature_dim()));
  }
  return encode(g, ck.params, mode);
}

inline void write_embeddings(const DenseMatrix& emb, const fs::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError(file.string() + ": cannot open for writing");
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto row = emb.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "\t" : "") << format_number(row[j]);
    os << '\n';
  }
}

struct EvalMethod {
  std::string name;
  fs::path checkpoint;
};

struct EvalOutput {
  MetricReport report;
  std::string csv;  // method,task,seed,metric,value
};

inline std::vector<std::string> downstream_names() {
  std::vector<std::string> names;
  for (auto t : kDownstreamTasks) names.emplace_back(downstream_name(t));
  return names;
}

/// All four probes for every method and evaluation seed.
inline EvalOutput cmd_eval(const RunConfig& cfg, const Graph& g,
                           const std::vector<EvalMethod>& methods) {
  if (!g.labels) throw ContractError("eval: graph has no node labels");
  if (methods.empty()) throw ContractError("eval: no checkpoints given");
  const EdgeSplit split = split_edges(g, cfg.eval.edge_split, cfg.eval.split_seed);
  const auto partition = greedy_partition(g, cfg.eval.partitions, cfg.eval.split_seed);
  const AdjacencyMode mode = cfg.train.task.adjacency_mode;

  std::ostringstream csv;
  csv << "method,task,seed,metric,value\n";
  std::vector<MethodMetrics> all;
  for (const auto& m : methods) {
    const fs::path link = link_checkpoint_path(m.checkpoint);
    if (!fs::exists(link)) {
      throw ContractError("eval: link-prediction checkpoint " + link.string() + " not found");
    }
    const DenseMatrix full = embed_with(load_checkpoint(m.checkpoint), g, mode);
    const DenseMatrix train_only = embed_with(load_checkpoint(link), split.train_graph, mode);
    MethodMetrics mm{m.name, {}};
    for (std::size_t i = 0; i < cfg.eval.seeds; ++i) {
      const std::uint64_t seed = cfg.train.seed + i;
      const auto v = evaluate_downstream(full, train_only, *g.labels, partition, split, seed);
      for (std::size_t t = 0; t < kDownstreamCount; ++t) {
        mm.runs[downstream_name(kDownstreamTasks[t])].push_back(v[t]);
        csv << m.name << ',' << downstream_name(kDownstreamTasks[t]) << ',' << seed << ','
            << metric_name(kDownstreamTasks[t]) << ',' << format_number(v[t]) << '\n';
      }
    }
    all.push_back(std::move(mm));
  }
  return {aggregate_report(all, downstream_names()), csv.str()};
}

inline nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["tasks"] = r.tasks;
  j["methods"] = nlohmann::json::array();
  for (const auto& m : r.methods) {
    nlohmann::json jm;
    jm["method"] = m.method;
    jm["average"] = m.average;
    jm["average_rank"] = m.average_rank;
    for (std::size_t t = 0; t < r.tasks.size(); ++t) {
      const auto& ts = m.tasks.at(r.tasks[t]);
      jm["tasks"][r.tasks[t]] = {{"metric", metric_name(kDownstreamTasks[t])},
                                 {"mean", ts.mean},
                                 {"std", ts.std},
                                 {"rank", ts.rank}};
    }
    j["methods"].push_back(jm);
  }
  return j;
}

}  // namespace mtgrl
