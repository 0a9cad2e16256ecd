#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/sbm.hpp"
#include "mtgrl/trainer.hpp"

namespace mtgrl {

struct EvalConfig {
  std::size_t seeds = 10;        // evaluation seeds 0..seeds-1 (offset by the run seed)
  std::uint64_t split_seed = 0;  // link-prediction edge split, shared with training
  std::size_t partitions = 10;
  std::array<double, 3> edge_split{0.7, 0.1, 0.2};
};

struct CheckgradConfig {
  std::size_t nodes = 12;
  std::size_t trials = 25;
  std::size_t feature_dim = 4;
  std::vector<std::size_t> hidden_dims{8, 4};
  double step = 1e-5;
  double tolerance = 1e-4;
};

/// Every knob of every subcommand. Text form: one `key = value` per line,
/// `#` starts a comment, unknown or repeated keys are errors.
struct RunConfig {
  TrainConfig train;
  SbmParams sbm;
  EvalConfig eval;
  CheckgradConfig checkgrad;

  void validate() const {
    train.validate();
    if (eval.seeds < 1) throw ConfigError("eval.seeds must be >= 1");
    if (eval.partitions < 2) throw ConfigError("eval.partitions must be >= 2");
    for (double r : eval.edge_split)
      if (!(r >= 0.0)) throw ConfigError("eval.edge_split ratios must be >= 0");
    if (!(eval.edge_split[0] > 0.0 && eval.edge_split[2] > 0.0)) {
      throw ConfigError("eval.edge_split needs positive train and test ratios");
    }
    if (checkgrad.nodes < 4) throw ConfigError("checkgrad.nodes must be >= 4");
    if (checkgrad.feature_dim < 1 || checkgrad.hidden_dims.empty()) {
      throw ConfigError("checkgrad dims must be non-empty");
    }
    if (checkgrad.trials < 1) throw ConfigError("checkgrad.trials must be >= 1");
    if (!(checkgrad.step > 0.0)) throw ConfigError("checkgrad.step must be > 0");
    if (!(checkgrad.tolerance > 0.0)) throw ConfigError("checkgrad.tolerance must be > 0");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || p != end) throw ConfigError("not a number: '" + v + "'");
  return x;
}

inline std::uint64_t to_uint(const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc{} || p != end) throw ConfigError("not a non-negative integer: '" + v + "'");
  return x;
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream is(v);
  for (std::string tok; std::getline(is, tok, ',');) out.push_back(trim(tok));
  return out;
}

inline TaskId to_task(const std::string& v) {
  auto t = parse_task(v);
  if (!t) throw ConfigError("unknown task '" + v + "'");
  return *t;
}

inline SamplerKind to_sampler(const std::string& v) {
  if (v == "full") return SamplerKind::Full;
  if (v == "khop") return SamplerKind::KHop;
  if (v == "uniform") return SamplerKind::UniformNodes;
  throw ConfigError("unknown sampler '" + v + "' (full|khop|uniform)");
}

inline const char* sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Full: return "full";
    case SamplerKind::KHop: return "khop";
    case SamplerKind::UniformNodes: return "uniform";
  }
  return "?";
}

inline std::string join_dims(const std::vector<std::size_t>& d) {
  std::string s;
  for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

inline std::string num(double x) { return format_number(x); }

inline const std::map<std::string, Key>& schema() {
  static const std::map<std::string, Key> keys = [] {
    std::map<std::string, Key> k;
    k["seed"] = {[](RunConfig& c, const std::string& v) { c.train.seed = to_uint(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }};
    k["mode"] = {[](RunConfig& c, const std::string& v) {
                   if (v == "pareto") {
                     c.train.mode = TrainMode::Pareto;
                   } else if (v == "uniform") {
                     c.train.mode = TrainMode::Uniform;
                   } else if (v.rfind("single:", 0) == 0) {
                     c.train.mode = TrainMode::Single;
                     c.train.single_task = to_task(v.substr(7));
                   } else {
                     throw ConfigError("mode must be pareto, uniform or single:<task>");
                   }
                 },
                 [](const RunConfig& c) {
                   if (c.train.mode == TrainMode::Single)
                     return std::string("single:") + task_name(c.train.single_task);
                   return std::string(mode_name(c.train.mode));
                 }};
    k["tasks"] = {[](RunConfig& c, const std::string& v) {
                    c.train.tasks.clear();
                    for (const auto& t : split_list(v)) c.train.tasks.push_back(to_task(t));
                  },
                  [](const RunConfig& c) {
                    std::string s;
                    for (std::size_t i = 0; i < c.train.tasks.size(); ++i)
                      s += (i ? "," : "") + std::string(task_name(c.train.tasks[i]));
                    return s;
                  }};
    k["steps"] = {[](RunConfig& c, const std::string& v) { c.train.steps = to_uint(v); },
                  [](const RunConfig& c) { return std::to_string(c.train.steps); }};
    k["dims"] = {[](RunConfig& c, const std::string& v) {
                   c.train.hidden_dims.clear();
                   for (const auto& t : split_list(v)) c.train.hidden_dims.push_back(to_uint(t));
                 },
                 [](const RunConfig& c) { return join_dims(c.train.hidden_dims); }};
    k["lr"] = {[](RunConfig& c, const std::string& v) {
                 c.train.optimizer.learning_rate = to_double(v);
               },
               [](const RunConfig& c) { return num(c.train.optimizer.learning_rate); }};
    k["weight_decay"] = {[](RunConfig& c, const std::string& v) {
                           c.train.optimizer.weight_decay = to_double(v);
                         },
                         [](const RunConfig& c) { return num(c.train.optimizer.weight_decay); }};
    k["adam_beta1"] = {[](RunConfig& c, const std::string& v) {
                         c.train.optimizer.beta1 = to_double(v);
                       },
                       [](const RunConfig& c) { return num(c.train.optimizer.beta1); }};
    k["adam_beta2"] = {[](RunConfig& c, const std::string& v) {
                         c.train.optimizer.beta2 = to_double(v);
                       },
                       [](const RunConfig& c) { return num(c.train.optimizer.beta2); }};
    k["adam_eps"] = {[](RunConfig& c, const std::string& v) {
                       c.train.optimizer.epsilon = to_double(v);
                     },
                     [](const RunConfig& c) { return num(c.train.optimizer.epsilon); }};
    k["gamma"] = {[](RunConfig& c, const std::string& v) {
                    c.train.solver.max_iterations = to_uint(v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.train.solver.max_iterations); }};
    k["xi"] = {[](RunConfig& c, const std::string& v) {
                 c.train.solver.step_threshold = to_double(v);
               },
               [](const RunConfig& c) { return num(c.train.solver.step_threshold); }};
    k["away_steps"] = {[](RunConfig& c, const std::string& v) {
                         c.train.solver.away_steps = to_bool(v);
                       },
                       [](const RunConfig& c) {
                         return std::string(c.train.solver.away_steps ? "true" : "false");
                       }};
    k["polish"] = {[](RunConfig& c, const std::string& v) { c.train.solver.polish = to_bool(v); },
                   [](const RunConfig& c) {
                     return std::string(c.train.solver.polish ? "true" : "false");
                   }};
    k["normalize_gradients"] = {[](RunConfig& c, const std::string& v) {
                                  c.train.solver.normalize_gradients = to_bool(v);
                                },
                                [](const RunConfig& c) {
                                  return std::string(
                                      c.train.solver.normalize_gradients ? "true" : "false");
                                }};
    k["scale_head_grads"] = {[](RunConfig& c, const std::string& v) {
                               c.train.scale_head_grads = to_bool(v);
                             },
                             [](const RunConfig& c) {
                               return std::string(c.train.scale_head_grads ? "true" : "false");
                             }};
    k["log_every"] = {[](RunConfig& c, const std::string& v) { c.train.log_every = to_uint(v); },
                      [](const RunConfig& c) { return std::to_string(c.train.log_every); }};
    k["log_timing"] = {[](RunConfig& c, const std::string& v) { c.train.log_timing = to_bool(v); },
                       [](const RunConfig& c) {
                         return std::string(c.train.log_timing ? "true" : "false");
                       }};
    k["adjacency"] = {[](RunConfig& c, const std::string& v) {
                        if (v == "sym_norm") {
                          c.train.task.adjacency_mode = AdjacencyMode::SymNorm;
                        } else if (v == "raw") {
                          c.train.task.adjacency_mode = AdjacencyMode::Raw;
                        } else {
                          throw ConfigError("adjacency must be sym_norm or raw");
                        }
                      },
                      [](const RunConfig& c) {
                        return std::string(c.train.task.adjacency_mode == AdjacencyMode::Raw
                                               ? "raw"
                                               : "sym_norm");
                      }};
    k["topo_batch"] = {[](RunConfig& c, const std::string& v) {
                         c.train.task.topo_batch = to_uint(v);
                       },
                       [](const RunConfig& c) { return std::to_string(c.train.task.topo_batch); }};
    k["temperature"] = {[](RunConfig& c, const std::string& v) {
                          c.train.task.temperature = to_double(v);
                        },
                        [](const RunConfig& c) { return num(c.train.task.temperature); }};
    k["decor_balance"] = {[](RunConfig& c, const std::string& v) {
                            c.train.task.decor_balance = to_double(v);
                          },
                          [](const RunConfig& c) { return num(c.train.task.decor_balance); }};
    for (TaskId t : kAllTasks) {
      const std::string p = std::string(task_name(t)) + ".";
      k[p + "sampler"] = {[t](RunConfig& c, const std::string& v) {
                            c.train.task.spec(t).sampler = to_sampler(v);
                          },
                          [t](const RunConfig& c) {
                            return std::string(sampler_name(c.train.task.spec(t).sampler));
                          }};
      k[p + "hops"] = {[t](RunConfig& c, const std::string& v) {
                         c.train.task.spec(t).hop_order = to_uint(v);
                       },
                       [t](const RunConfig& c) {
                         return std::to_string(c.train.task.spec(t).hop_order);
                       }};
      k[p + "seed_fraction"] = {[t](RunConfig& c, const std::string& v) {
                                  if (v == "full") {
                                    c.train.task.spec(t).seed_fraction.reset();
                                  } else {
                                    c.train.task.spec(t).seed_fraction = to_double(v);
                                  }
                                },
                                [t](const RunConfig& c) {
                                  const auto& f = c.train.task.spec(t).seed_fraction;
                                  return f ? num(*f) : std::string("full");
                                }};
      k[p + "mask_ratio"] = {[t](RunConfig& c, const std::string& v) {
                               c.train.task.spec(t).feature_mask_ratio = to_double(v);
                             },
                             [t](const RunConfig& c) {
                               return num(c.train.task.spec(t).feature_mask_ratio);
                             }};
      k[p + "drop_ratio"] = {[t](RunConfig& c, const std::string& v) {
                               c.train.task.spec(t).edge_drop_ratio = to_double(v);
                             },
                             [t](const RunConfig& c) {
                               return num(c.train.task.spec(t).edge_drop_ratio);
                             }};
    }
    k["sbm.blocks"] = {[](RunConfig& c, const std::string& v) { c.sbm.blocks = to_uint(v); },
                       [](const RunConfig& c) { return std::to_string(c.sbm.blocks); }};
    k["sbm.nodes"] = {[](RunConfig& c, const std::string& v) { c.sbm.nodes = to_uint(v); },
                      [](const RunConfig& c) { return std::to_string(c.sbm.nodes); }};
    k["sbm.p_intra"] = {[](RunConfig& c, const std::string& v) { c.sbm.p_intra = to_double(v); },
                        [](const RunConfig& c) { return num(c.sbm.p_intra); }};
    k["sbm.p_inter"] = {[](RunConfig& c, const std::string& v) { c.sbm.p_inter = to_double(v); },
                        [](const RunConfig& c) { return num(c.sbm.p_inter); }};
    k["sbm.feature_dim"] = {[](RunConfig& c, const std::string& v) {
                              c.sbm.feature_dim = to_uint(v);
                            },
                            [](const RunConfig& c) { return std::to_string(c.sbm.feature_dim); }};
    k["sbm.feature_noise"] = {[](RunConfig& c, const std::string& v) {
                                c.sbm.feature_noise = to_double(v);
                              },
                              [](const RunConfig& c) { return num(c.sbm.feature_noise); }};
    k["eval.seeds"] = {[](RunConfig& c, const std::string& v) { c.eval.seeds = to_uint(v); },
                       [](const RunConfig& c) { return std::to_string(c.eval.seeds); }};
    k["eval.split_seed"] = {[](RunConfig& c, const std::string& v) {
                              c.eval.split_seed = to_uint(v);
                            },
                            [](const RunConfig& c) { return std::to_string(c.eval.split_seed); }};
    k["eval.partitions"] = {[](RunConfig& c, const std::string& v) {
                              c.eval.partitions = to_uint(v);
                            },
                            [](const RunConfig& c) { return std::to_string(c.eval.partitions); }};
    k["eval.edge_split"] = {[](RunConfig& c, const std::string& v) {
                              const auto parts = split_list(v);
                              if (parts.size() != 3) {
                                throw ConfigError("eval.edge_split needs three ratios");
                              }
                              for (std::size_t i = 0; i < 3; ++i)
                                c.eval.edge_split[i] = to_double(parts[i]);
                            },
                            [](const RunConfig& c) {
                              return num(c.eval.edge_split[0]) + "," +
                                     num(c.eval.edge_split[1]) + "," + num(c.eval.edge_split[2]);
                            }};
    k["checkgrad.nodes"] = {[](RunConfig& c, const std::string& v) {
                              c.checkgrad.nodes = to_uint(v);
                            },
                            [](const RunConfig& c) { return std::to_string(c.checkgrad.nodes); }};
    k["checkgrad.trials"] = {[](RunConfig& c, const std::string& v) {
                               c.checkgrad.trials = to_uint(v);
                             },
                             [](const RunConfig& c) {
                               return std::to_string(c.checkgrad.trials);
                             }};
    k["checkgrad.feature_dim"] = {[](RunConfig& c, const std::string& v) {
                                    c.checkgrad.feature_dim = to_uint(v);
                                  },
                                  [](const RunConfig& c) {
                                    return std::to_string(c.checkgrad.feature_dim);
                                  }};
    k["checkgrad.dims"] = {[](RunConfig& c, const std::string& v) {
                             c.checkgrad.hidden_dims.clear();
                             for (const auto& t : split_list(v))
                               c.checkgrad.hidden_dims.push_back(to_uint(t));
                           },
                           [](const RunConfig& c) { return join_dims(c.checkgrad.hidden_dims); }};
    k["checkgrad.step"] = {[](RunConfig& c, const std::string& v) {
                             c.checkgrad.step = to_double(v);
                           },
                           [](const RunConfig& c) { return num(c.checkgrad.step); }};
    k["checkgrad.tolerance"] = {[](RunConfig& c, const std::string& v) {
                                  c.checkgrad.tolerance = to_double(v);
                                },
                                [](const RunConfig& c) { return num(c.checkgrad.tolerance); }};
    return k;
  }();
  return keys;
}

}  // namespace config_detail

/// Applies `key = value` lines on top of the defaults. `source` names the
/// input in error messages.
inline RunConfig parse_config(std::istream& is, const std::string& source = "<config>",
                              RunConfig base = {}) {
  const auto& schema = config_detail::schema();
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = config_detail::trim(line);
    if (body.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = config_detail::trim(body.substr(0, eq));
    const std::string value = config_detail::trim(body.substr(eq + 1));
    auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(where + ": key '" + key + "' already set on line " +
                        std::to_string(prev->second));
    }
    seen[key] = line_no;
    try {
      it->second.set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + key + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError(file.string() + ": cannot open config");
  return parse_config(is, file.string());
}

/// Every key with its effective value, sorted by key; parses back to `c`.
inline std::string config_to_text(const RunConfig& c) {
  std::string out;
  for (const auto& [key, k] : config_detail::schema()) out += key + " = " + k.get(c) + "\n";
  return out;
}

}  // namespace mtgrl
