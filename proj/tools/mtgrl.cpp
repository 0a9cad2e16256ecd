#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtgrl/app.hpp"

namespace {

using namespace mtgrl;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
  if (g.seed) cfg.train.seed = *g.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError(file.string() + ": cannot open for writing");
  os << text;
}

std::string require_out(const Globals& g, const char* command) {
  if (g.out.empty()) throw ConfigError(std::string(command) + ": --out is required");
  return g.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task self-supervised graph encoder with min-norm task weighting"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--seed", globals.seed, "Seed for every random stream (overrides config)");
  app.add_option("--out", globals.out, "Output file or directory");
  app.add_option("--config", globals.config, "key = value configuration file");

  auto* gen = app.add_subcommand("gen", "Generate an SBM graph directory");

  auto* train = app.add_subcommand("train", "Train an encoder; writes checkpoints and step CSVs");
  std::string train_graph;
  train->add_option("--graph", train_graph, "Graph directory")->required();

  auto* embed = app.add_subcommand("embed", "Export node representations as TSV");
  std::string embed_graph, embed_checkpoint;
  embed->add_option("--graph", embed_graph, "Graph directory")->required();
  embed->add_option("--checkpoint", embed_checkpoint, "Checkpoint file")->required();

  auto* eval = app.add_subcommand("eval", "Run the four downstream probes and rank methods");
  std::string eval_graph;
  std::vector<std::string> eval_checkpoints, eval_names;
  eval->add_option("--graph", eval_graph, "Graph directory")->required();
  eval->add_option("--checkpoint", eval_checkpoints, "Checkpoint file (repeatable)")->required();
  eval->add_option("--name", eval_names, "Method name per checkpoint (defaults to its directory)");

  auto* solve = app.add_subcommand("solve", "Min-norm weights for a gradient file");
  std::string gradient_file;
  solve->add_option("gradients", gradient_file, "File: 'K P' then K rows of P numbers")
      ->required();

  auto* checkgrad = app.add_subcommand("checkgrad", "Finite-difference check of every task");
  std::string fault_op;
  checkgrad->add_option("--inject-fault", fault_op,
                        "Scale the adjoint of one primitive (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = resolve_config(globals);

    if (gen->parsed()) {
      const std::string out = require_out(globals, "gen");
      save_graph(generate_sbm(cfg.train.seed, cfg.sbm), out);
      std::cout << "wrote " << out << "\n";
    } else if (train->parsed()) {
      const std::string out = require_out(globals, "train");
      const auto o = cmd_train(cfg, load_graph(train_graph), out);
      std::cout << "wrote " << o.checkpoint.string() << ", " << o.link_checkpoint.string() << ", "
                << o.steps_csv.string() << "\n";
    } else if (embed->parsed()) {
      const std::string out = require_out(globals, "embed");
      const Graph g = load_graph(embed_graph);
      write_embeddings(embed_with(load_checkpoint(embed_checkpoint), g,
                                  cfg.train.task.adjacency_mode),
                       out);
    } else if (eval->parsed()) {
      if (!eval_names.empty() && eval_names.size() != eval_checkpoints.size()) {
        throw ConfigError("eval: give one --name per --checkpoint");
      }
      std::vector<EvalMethod> methods;
      for (std::size_t i = 0; i < eval_checkpoints.size(); ++i) {
        const fs::path ck = eval_checkpoints[i];
        std::string name = eval_names.empty() ? ck.parent_path().filename().string() : eval_names[i];
        if (name.empty()) name = ck.stem().string();
        methods.push_back({name, ck});
      }
      const EvalOutput res = cmd_eval(cfg, load_graph(eval_graph), methods);
      const std::string json = report_to_json(res.report).dump(2) + "\n";
      if (globals.out.empty()) {
        std::cout << json;
      } else {
        write_text(fs::path(globals.out) / "report.json", json);
        write_text(fs::path(globals.out) / "metrics.csv", res.csv);
        std::cout << json;
      }
    } else if (solve->parsed()) {
      const auto j = solve_to_json(read_gradient_file(gradient_file), cfg.train.solver);
      std::cout << j.dump() << "\n";
    } else if (checkgrad->parsed()) {
      std::optional<Op> fault;
      if (!fault_op.empty()) {
        fault = parse_op(fault_op);
        if (!fault) throw ConfigError("unknown primitive '" + fault_op + "'");
      }
      const auto rows = run_checkgrad(cfg, fault);
      bool ok = true;
      std::cout << "task\tmax_rel_error\tresult\n";
      for (const auto& r : rows) {
        std::cout << r.name << '\t' << format_number(r.worst) << '\t' << (r.pass ? "pass" : "FAIL")
                  << '\n';
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
  } catch (const mtgrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
