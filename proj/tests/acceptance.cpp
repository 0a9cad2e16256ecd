// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when a
// criterion that is not marked --report-only fails.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtgrl/app.hpp"
#include "test_support.hpp"

namespace {

using namespace mtgrl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

TaskGradientMatrix instance(std::size_t k, std::size_t p, std::uint64_t seed) {
  return TaskGradientMatrix(testing::gaussian_matrix(k, p, seed));
}

// --- solver ----------------------------------------------------------------------------

struct SolverSweep {
  std::size_t solves = 0;
  double worst_residual_ratio = 0.0;  // residual / max(1, phi)

  void record(const TaskGradientMatrix& g, const MinNormSolution& s) {
    ++solves;
    const double r = saddle_point_residual(g, s.alpha) / std::max(1.0, s.phi);
    worst_residual_ratio = std::max(worst_residual_ratio, r);
  }
};

SolverSweep g_sweep;

Outcome criterion_oracle() {
  std::size_t failures = 0;
  double worst_excess = 0.0, solver_seconds = 0.0;
  std::uint64_t seed = 1000;
  for (std::size_t k : {2u, 3u, 4u}) {
    for (std::size_t p : {5u, 50u}) {
      for (int i = 0; i < 100; ++i) {
        const auto g = instance(k, p, seed++);
        const auto t0 = Clock::now();
        const auto fw = frank_wolfe_min_norm(g, 100, 1e-5);
        solver_seconds += seconds_since(t0);
        g_sweep.record(g, fw);
        const double star = simplex_objective(g, brute_force_min_norm(g, 1e-3));
        const double excess = fw.phi - star;
        worst_excess = std::max(worst_excess, excess / std::max(1e-6, 1e-3 * star));
        if (excess > std::max(1e-6, 1e-3 * star)) ++failures;
      }
    }
  }
  return {failures == 0 && solver_seconds < 10.0,
          "600 instances, " + std::to_string(failures) + " over tolerance, worst excess/tol " +
              fmt(worst_excess) + ", solver time " + fmt(solver_seconds) + " s"};
}

Outcome criterion_closed_form() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = instance(2, 1 + seed % 50, 20000 + seed);
    const auto fw = frank_wolfe_min_norm(g, 100, 1e-5);
    g_sweep.record(g, fw);
    const double cf = simplex_objective(g, solve_two_task(g.row(0), g.row(1)));
    worst = std::max(worst, std::abs(fw.phi - cf));
  }
  return {worst <= 1e-8, "1000 instances, max |phi_fw - phi_cf| " + fmt(worst)};
}

Outcome criterion_gap_bound() {
  std::size_t violations = 0, checked = 0;
  double tightest = 0.0;  // max delta / bound over gamma' >= 2
  FrankWolfeOptions opt;
  opt.polish = false;  // the bound concerns the raw iterates
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto g = instance(2 + seed % 3, 2 + (seed * 7) % 49, 40000 + seed);
    const auto fw = frank_wolfe_min_norm(g, opt);
    const auto rep = smoothness_and_gap(g, fw.trace, fw.phi);
    violations += rep.violations;
    for (std::size_t i = 1; i < rep.delta.size(); ++i, ++checked)
      tightest = std::max(tightest, rep.delta[i] / rep.bound[i]);
  }
  return {violations == 0, std::to_string(violations) + " violations over " +
                               std::to_string(checked) + " iterations, max delta/bound " +
                               fmt(tightest)};
}

Outcome criterion_residual() {
  if (g_sweep.solves == 0) {
    // Run alone: repeat the solves of the oracle sweep.
    for (std::uint64_t seed = 0; seed < 600; ++seed) {
      const auto g = instance(2 + seed / 200, (seed / 100) % 2 ? 50 : 5, 1000 + seed);
      g_sweep.record(g, frank_wolfe_min_norm(g, 100, 1e-5));
    }
  }
  return {g_sweep.worst_residual_ratio <= 1e-6,
          std::to_string(g_sweep.solves) + " solves, max residual/max(1,phi) " +
              fmt(g_sweep.worst_residual_ratio)};
}

// --- gradients and losses -------------------------------------------------------------------

Outcome criterion_gradients() {
  const CheckgradConfig cg;  // 12 nodes
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const std::string& name, double e) {
    if (e > worst) worst = e, worst_name = name;
  };
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    for (TaskId t : kAllTasks) track(task_name(t), task_gradcheck(t, seed, cg));
    track("encoder", encoder_gradcheck(seed, cg));
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 60.0,
          "6 checks x 25 seeds, n=" + std::to_string(cg.nodes) + ", worst " + fmt(worst) + " (" +
              worst_name + "), " + fmt(elapsed) + " s"};
}

Outcome criterion_unit_values() {
  std::vector<std::string> failed;
  TaskConfig cfg = gradcheck_task_config(TaskConfig{});
  const Graph g = generate_sbm(1, SbmParams{2, 14, 0.5, 0.1, 4, 0.5});
  const auto params = EncoderParams::init({4, 8, 4}, 1);
  TaskHeads heads = TaskHeads::init(4, 4, 1);
  heads.topo_scorer = DenseMatrix(4, 1);
  heads.ming_scorer = DenseMatrix(8, 1);
  for (TaskId t : {TaskId::TopoRec, TaskId::MiNg}) {
    Rng rng = make_stream({3, 5});
    const double loss = task_loss_value(prepare_task(t, g, cfg, rng), params, heads, cfg);
    if (std::abs(loss - std::log(2.0)) > 1e-12) failed.push_back(task_name(t));
  }
  for (std::size_t n : {2u, 5u, 17u}) {
    DenseMatrix h(n, 3);
    for (std::size_t i = 0; i < n; ++i) h(i, 0) = 0.3, h(i, 1) = -1.2, h(i, 2) = 2.0;
    Tape tape;
    infonce_objective(tape, tape.input("a", h), tape.input("b", h), 0.1);
    const double v = tape.forward_eval().item();
    if (std::abs(v - std::log(2.0 * static_cast<double>(n) - 1.0)) > 1e-9)
      failed.push_back("minsg n=" + std::to_string(n));
  }
  {
    const DenseMatrix target = testing::random_matrix(6, 3, 4);
    Tape tape;
    featrec_objective(tape, tape.input("r", target), target,
                      std::vector<bool>{true, false, true, false, false, true});
    if (tape.forward_eval().item() != 0.0) failed.push_back("featrec");
  }
  std::string detail = "ln2 (toporec, ming), ln(2N'-1) for N' in {2,5,17}, featrec 0";
  for (const auto& f : failed) detail += "; mismatch " + f;
  return {failed.empty(), detail};
}

// --- training ---------------------------------------------------------------------------

Outcome criterion_multi_descent() {
  const Graph g = generate_sbm(3, SbmParams{3, 60, 0.2, 0.02, 8, 0.5});
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.seed = 7;
  TrainState state = TrainState::init(g.feature_dim(), cfg);
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t bad = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto rep = first_order_descent_check(state, g, cfg, 1e-4);
    worst = std::max(worst, rep.worst_delta());
    if (rep.worst_delta() > 1e-7) ++bad;
    train_step(state, g, cfg);
  }
  return {bad == 0, "20 steps x 5 tasks, max loss delta " + fmt(worst) + ", " +
                        std::to_string(bad) + " steps over 1e-7"};
}

/// Downstream average for each method on one seed.
std::vector<std::pair<std::string, double>> generalization_seed(std::uint64_t seed,
                                                                std::size_t steps) {
  SbmParams sp;
  sp.feature_noise = 1.5;
  const Graph g = generate_sbm(seed, sp);
  const EdgeSplit split = split_edges(g, {0.7, 0.1, 0.2}, seed);
  const auto partition = greedy_partition(g, 10, seed);
  TrainConfig base;
  base.steps = steps;
  base.seed = seed;
  std::vector<std::pair<std::string, TrainConfig>> runs{{"pareto", base}};
  runs.push_back({"uniform", base});
  runs.back().second.mode = TrainMode::Uniform;
  for (TaskId t : kAllTasks) {
    runs.push_back({task_name(t), base});
    runs.back().second.mode = TrainMode::Single;
    runs.back().second.single_task = t;
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [name, cfg] : runs) {
    const auto full = train_run(g, cfg);
    const auto link = train_run(split.train_graph, cfg);
    const auto m = evaluate_downstream(encode(g, full.state.params),
                                       encode(split.train_graph, link.state.params), *g.labels,
                                       partition, split, seed);
    out.emplace_back(name, (m[0] + m[1] + m[2] + m[3]) / 4.0);
  }
  return out;
}

Outcome criterion_generalization() {
  std::size_t beats_singles = 0, beats_uniform = 0;
  double slowest = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto t0 = Clock::now();
    const auto avg = generalization_seed(seed, 1000);
    slowest = std::max(slowest, seconds_since(t0));
    const double pareto = avg[0].second;
    bool all_singles = true;
    std::cout << "  seed " << seed;
    for (const auto& [name, v] : avg) {
      std::cout << ' ' << name << '=' << fmt(v);
      if (name != "pareto" && name != "uniform" && v >= pareto) all_singles = false;
    }
    std::cout << std::endl;
    beats_singles += all_singles;
    beats_uniform += pareto > avg[1].second;
  }
  return {beats_singles >= 3 && beats_uniform >= 3 && slowest < 600.0,
          "pareto beats every single task in " + std::to_string(beats_singles) +
              "/5 seeds, beats uniform in " + std::to_string(beats_uniform) +
              "/5, slowest seed " + fmt(slowest) + " s"};
}

// --- determinism and metrics -------------------------------------------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MTGRL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "mtgrl_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "steps = 30\nsbm.nodes = 150\neval.seeds = 3\n";
  }
  const std::string common = "--seed 11 --config " + (dir / "run.cfg").string();
  if (run_cli(common + " --out " + (dir / "graph").string() + " gen") != 0)
    return {false, "gen failed"};
  for (const char* r : {"a", "b"}) {
    const fs::path run = dir / r;
    if (run_cli(common + " --out " + (run / "model").string() + " train --graph " +
                (dir / "graph").string()) != 0)
      return {false, std::string("train failed in run ") + r};
    if (run_cli(common + " --out " + (run / "eval").string() + " eval --graph " +
                (dir / "graph").string() + " --checkpoint " +
                (run / "model" / "checkpoint.bin").string() + " --name pareto") != 0)
      return {false, std::string("eval failed in run ") + r};
  }
  std::vector<std::string> differing;
  for (const char* f : {"model/steps.csv", "model/steps.link.csv", "eval/metrics.csv"}) {
    const std::string a = slurp(dir / "a" / f);
    if (a.empty() || a != slurp(dir / "b" / f)) differing.push_back(f);
  }
  std::string detail = "steps.csv, steps.link.csv, metrics.csv compared byte for byte";
  for (const auto& f : differing) detail += "; differs " + f;
  return {differing.empty(), detail};
}

Outcome criterion_metrics() {
  const std::vector<double> pos{0.9, 0.8, 0.4}, neg{0.7, 0.3, 0.2};
  const bool auc = roc_auc(pos, neg) == 8.0 / 9.0;
  const std::vector<int> a{0, 0, 1, 1, 2, 2, 2}, relabel{2, 2, 0, 0, 1, 1, 1};
  const bool nmi = normalized_mutual_information(a, a) == 1.0 &&
                   normalized_mutual_information(a, relabel) == 1.0;
  auto method = [](std::string name, std::map<std::string, std::vector<double>> runs) {
    return MethodMetrics{std::move(name), std::move(runs)};
  };
  const auto rep =
      aggregate_report({method("a", {{"t1", {0.7, 0.9}}, {"t2", {0.5}}, {"t3", {0.9}}}),
                        method("b", {{"t1", {0.7}}, {"t2", {0.6}}, {"t3", {0.9}}}),
                        method("c", {{"t1", {0.7}}, {"t2", {0.4}}, {"t3", {0.3}}})},
                       {"t1", "t2", "t3"});
  const std::vector<std::vector<int>> ranks{{1, 2, 1}, {2, 1, 1}, {2, 3, 2}};
  const std::vector<double> avg_rank{4.0 / 3.0, 4.0 / 3.0, 7.0 / 3.0};
  bool table = rep.methods.size() == 3;
  for (std::size_t m = 0; table && m < 3; ++m) {
    for (std::size_t t = 0; t < 3; ++t)
      table = table && rep.methods[m].tasks.at(rep.tasks[t]).rank == ranks[m][t];
    table = table && std::abs(rep.methods[m].average_rank - avg_rank[m]) <= 1e-15;
  }
  return {auc && nmi && table, std::string("auc 8/9 ") + (auc ? "exact" : "wrong") + ", nmi " +
                                   (nmi ? "1.0" : "wrong") + ", rank table " +
                                   (table ? "matches" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> skip, only, report_only;
  app.add_option("--skip", skip, "criteria to skip")->check(CLI::Range(1, 10));
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 10));
  app.add_option("--report-only", report_only,
                 "criteria whose failure is printed but does not fail the run")
      ->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::array<std::pair<const char*, std::function<Outcome()>>, 10> criteria{{
      {"solver matches lattice oracle", criterion_oracle},
      {"two-task closed form", criterion_closed_form},
      {"convergence gap bound", criterion_gap_bound},
      {"saddle-point residual", criterion_residual},
      {"finite-difference gradients", criterion_gradients},
      {"loss unit values", criterion_unit_values},
      {"first-order multi-descent", criterion_multi_descent},
      {"multi-task generalization", criterion_generalization},
      {"train+eval determinism", criterion_determinism},
      {"metric hand cases", criterion_metrics},
  }};
  const std::set<int> skipped(skip.begin(), skip.end()), selected(only.begin(), only.end());
  const std::set<int> lenient(report_only.begin(), report_only.end());

  int hard_failures = 0;
  for (int i = 1; i <= 10; ++i) {
    if (skipped.count(i) || (!selected.empty() && !selected.count(i))) continue;
    Outcome o;
    try {
      o = criteria[i - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << " ("
              << criteria[i - 1].first << "): " << o.detail
              << (!o.pass && lenient.count(i) ? " [report-only]" : "") << std::endl;
    if (!o.pass && !lenient.count(i)) ++hard_failures;
  }
  return hard_failures == 0 ? 0 : 1;
}
