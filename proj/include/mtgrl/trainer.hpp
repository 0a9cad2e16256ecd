#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtgrl/encoder.hpp"
#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/pareto.hpp"
#include "mtgrl/pretext.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

// --- AdamW -------------------------------------------------------------------

struct AdamWOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;
};

/// Moments of one tensor. `steps` counts updates applied to this tensor, so
/// tensors that skip a step keep their own bias correction.
struct AdamWSlot {
  DenseMatrix m;
  DenseMatrix v;
  std::size_t steps = 0;

  bool operator==(const AdamWSlot&) const = default;
};

/// Decoupled weight decay: p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p).
inline void adamw_update(DenseMatrix& param, const DenseMatrix& grad, AdamWSlot& slot,
                         const AdamWOptions& opt) {
  require_same_shape(param, grad, "adamw");
  if (slot.m.empty()) {
    slot.m = DenseMatrix(param.rows(), param.cols());
    slot.v = DenseMatrix(param.rows(), param.cols());
  }
  ++slot.steps;
  const double t = static_cast<double>(slot.steps);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    slot.m[i] = opt.beta1 * slot.m[i] + (1.0 - opt.beta1) * g;
    slot.v[i] = opt.beta2 * slot.v[i] + (1.0 - opt.beta2) * g * g;
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= opt.learning_rate * (m_hat / (std::sqrt(v_hat) + opt.epsilon) +
                                     opt.weight_decay * param[i]);
  }
}

// --- configuration -----------------------------------------------------------

enum class TrainMode { Pareto, Uniform, Single };

inline const char* mode_name(TrainMode m) noexcept {
  switch (m) {
    case TrainMode::Pareto: return "pareto";
    case TrainMode::Uniform: return "uniform";
    case TrainMode::Single: return "single";
  }
  return "?";
}

struct TrainConfig {
  TrainMode mode = TrainMode::Pareto;
  TaskId single_task = TaskId::FeatRec;  // used in Single mode
  std::vector<TaskId> tasks{kAllTasks.begin(), kAllTasks.end()};
  std::size_t steps = 1000;
  std::vector<std::size_t> hidden_dims{64, 32};
  AdamWOptions optimizer;
  FrankWolfeOptions solver;
  TaskConfig task;
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
  bool scale_head_grads = true;  // head k sees alpha_k * grad
  bool log_timing = false;       // wall time breaks byte-identical logs

  /// Tasks evaluated each step.
  std::vector<TaskId> active_tasks() const {
    if (mode == TrainMode::Single) return {single_task};
    return tasks;
  }

  void validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
          optimizer.beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0,1)");
    }
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
    if (hidden_dims.empty()) throw ConfigError("encoder needs at least one layer");
    for (std::size_t d : hidden_dims)
      if (d == 0) throw ConfigError("encoder dims must be positive");
    if (log_every < 1) throw ConfigError("log_every must be >= 1");
    if (mode != TrainMode::Single) {
      if (tasks.empty()) throw ConfigError("no active tasks");
      std::array<bool, kTaskCount> seen{};
      for (TaskId t : tasks) {
        if (seen[index_of(t)]) throw ConfigError(std::string("task listed twice: ") + task_name(t));
        seen[index_of(t)] = true;
      }
    }
    try {
      solver.validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    task.validate();
  }
};

// --- state and records -------------------------------------------------------

struct TrainState {
  EncoderParams params;
  TaskHeads heads;
  std::vector<AdamWSlot> encoder_slots;
  std::array<AdamWSlot, 3> head_slots;  // feat_decoder, topo_scorer, ming_scorer
  std::size_t step = 0;

  static TrainState init(std::size_t feature_dim, const TrainConfig& cfg) {
    std::vector<std::size_t> dims{feature_dim};
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    TrainState s;
    s.params = EncoderParams::init(std::move(dims), cfg.seed);
    s.heads = TaskHeads::init(s.params.output_dim(), feature_dim, cfg.seed);
    s.encoder_slots.resize(s.params.layers());
    return s;
  }
};

inline std::size_t head_slot_index(TaskId t) {
  switch (t) {
    case TaskId::FeatRec: return 0;
    case TaskId::TopoRec: return 1;
    case TaskId::MiNg: return 2;
    default: throw ContractError(std::string("task ") + task_name(t) + " has no head");
  }
}

struct StepRecord {
  std::size_t step = 0;
  std::array<std::optional<double>, kTaskCount> losses;  // set for evaluated tasks
  std::array<double, kTaskCount> alpha{};                // zero for inactive tasks
  std::array<double, kTaskCount> task_grad_norms{};      // ||g_k||
  double grad_norm = 0.0;                                // ||alpha G||
  std::size_t solver_iters = 0;
  double ms = 0.0;

  double total_loss() const {
    double s = 0.0;
    for (const auto& l : losses)
      if (l) s += *l;
    return s;
  }

  bool operator==(const StepRecord&) const = default;
};

// --- one step ------------------------------------------------------------------

/// The frozen random inputs of every active task at `step`.
inline std::vector<TaskBatch> prepare_step(const Graph& g, const TrainConfig& cfg,
                                           std::size_t step) {
  std::vector<TaskBatch> batches;
  for (TaskId t : cfg.active_tasks()) {
    Rng rng = make_stream({cfg.seed, stream::kTask, index_of(t), step});
    batches.push_back(prepare_task(t, g, cfg.task, rng));
  }
  return batches;
}

inline std::vector<TaskLossResult> evaluate_step(const std::vector<TaskBatch>& batches,
                                                 const TrainState& state,
                                                 const TrainConfig& cfg) {
  std::vector<TaskLossResult> results;
  for (const auto& b : batches) {
    try {
      results.push_back(evaluate_task(b, state.params, state.heads, cfg.task));
    } catch (const NumericError& e) {
      throw NumericError(std::string("task ") + task_name(b.task) + ": " + e.what());
    }
  }
  return results;
}

struct Reconciliation {
  SimplexWeights alpha;  // over the active tasks, in order
  FlatGradient direction;
  std::size_t solver_iters = 0;
  double residual = 0.0;
};

inline Reconciliation reconcile(const std::vector<TaskLossResult>& results,
                                const TrainConfig& cfg) {
  std::vector<FlatGradient> rows;
  for (const auto& r : results) rows.push_back(r.shared_grad);
  const auto g = TaskGradientMatrix::from_rows(rows);
  Reconciliation rc;
  switch (cfg.mode) {
    case TrainMode::Pareto: {
      auto sol = frank_wolfe_min_norm(g, cfg.solver);
      rc.alpha = std::move(sol.alpha);
      rc.solver_iters = sol.trace.count();
      break;
    }
    case TrainMode::Uniform: rc.alpha = SimplexWeights::uniform(g.tasks()); break;
    case TrainMode::Single: rc.alpha = SimplexWeights::one_hot(g.tasks(), 0); break;
  }
  rc.direction = combined_direction(g, rc.alpha);
  rc.residual = saddle_point_residual(g, rc.alpha);
  return rc;
}

/// One optimisation step: evaluate the active tasks on fresh samples, weight
/// their shared gradients by alpha, and apply AdamW to the encoder and to the
/// heads of the active tasks. alpha is a constant of the update.
inline StepRecord train_step(TrainState& state, const Graph& g, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto batches = prepare_step(g, cfg, state.step);
  const auto results = evaluate_step(batches, state, cfg);
  const Reconciliation rc = reconcile(results, cfg);

  StepRecord rec;
  rec.step = state.step;
  rec.solver_iters = rc.solver_iters;
  rec.grad_norm = std::sqrt(dot(rc.direction.data, rc.direction.data));
  for (std::size_t i = 0; i < results.size(); ++i) {
    const std::size_t k = index_of(results[i].task);
    rec.losses[k] = results[i].loss;
    rec.alpha[k] = rc.alpha[i];
    rec.task_grad_norms[k] =
        std::sqrt(dot(results[i].shared_grad.data, results[i].shared_grad.data));
  }

  const auto layer_grads = unflatten(rc.direction, state.params);
  for (std::size_t l = 0; l < state.params.layers(); ++l)
    adamw_update(state.params.weights[l], layer_grads[l], state.encoder_slots[l], cfg.optimizer);
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].head_grad) continue;
    DenseMatrix grad = *results[i].head_grad;
    if (cfg.scale_head_grads)
      for (double& x : grad.data()) x *= rc.alpha[i];
    const TaskId t = results[i].task;
    adamw_update(state.heads.head_of(t), grad, state.head_slots[head_slot_index(t)],
                 cfg.optimizer);
  }
  ++state.step;
  if (cfg.log_timing) {
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                 .count();
  }
  return rec;
}

struct TrainResult {
  TrainState state;
  std::vector<StepRecord> records;
};

using StepHook = std::function<void(const StepRecord&)>;

/// Deterministic in cfg.seed. Records steps where step % log_every == 0 and
/// the final step.
inline TrainResult train_run(const Graph& g, const TrainConfig& cfg, const StepHook& hook = {}) {
  cfg.validate();
  g.validate();
  TrainResult out;
  out.state = TrainState::init(g.feature_dim(), cfg);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    StepRecord rec = train_step(out.state, g, cfg);
    if (s % cfg.log_every == 0 || s + 1 == cfg.steps) {
      if (hook) hook(rec);
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

// --- first-order descent probe -----------------------------------------------

struct DescentReport {
  std::vector<TaskId> tasks;
  std::vector<double> before;
  std::vector<double> after;
  std::vector<double> delta;  // after - before
  SimplexWeights alpha;
  double direction_norm = 0.0;
  double residual = 0.0;

  double worst_delta() const {
    double w = -std::numeric_limits<double>::infinity();
    for (double d : delta) w = std::max(w, d);
    return w;
  }
};

/// Moves the shared parameters by -eps * alpha G / ||alpha G|| on the frozen
/// samples of the current step and reports each task's loss change.
inline DescentReport first_order_descent_check(const TrainState& state, const Graph& g,
                                               const TrainConfig& cfg, double eps) {
  if (cfg.mode != TrainMode::Pareto) throw ContractError("descent check needs pareto mode");
  if (!(eps > 0.0)) throw ContractError("descent check: eps must be > 0");
  const auto batches = prepare_step(g, cfg, state.step);
  const auto results = evaluate_step(batches, state, cfg);
  const Reconciliation rc = reconcile(results, cfg);

  DescentReport rep;
  rep.alpha = rc.alpha;
  rep.residual = rc.residual;
  rep.direction_norm = std::sqrt(dot(rc.direction.data, rc.direction.data));
  EncoderParams moved = state.params;
  if (rep.direction_norm > 0.0) {
    const auto step = unflatten(rc.direction, state.params);
    for (std::size_t l = 0; l < moved.layers(); ++l)
      axpy(-eps / rep.direction_norm, step[l], moved.weights[l]);
  }
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const double after = task_loss_value(batches[i], moved, state.heads, cfg.task);
    rep.tasks.push_back(batches[i].task);
    rep.before.push_back(results[i].loss);
    rep.after.push_back(after);
    rep.delta.push_back(after - results[i].loss);
  }
  return rep;
}

// --- CSV -----------------------------------------------------------------------

inline std::string format_number(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline void write_step_csv_header(std::ostream& os) {
  os << "step";
  for (TaskId t : kAllTasks) os << ",loss_" << task_name(t);
  for (TaskId t : kAllTasks) os << ",alpha_" << task_name(t);
  os << ",grad_norm,solver_iters,ms\n";
}

/// Loss fields of tasks not evaluated this step are empty.
inline void write_step_csv_row(std::ostream& os, const StepRecord& r) {
  os << r.step;
  for (const auto& l : r.losses) {
    os << ',';
    if (l) os << format_number(*l);
  }
  for (double a : r.alpha) os << ',' << format_number(a);
  os << ',' << format_number(r.grad_norm) << ',' << r.solver_iters << ',' << format_number(r.ms)
     << '\n';
}

}  // namespace mtgrl
