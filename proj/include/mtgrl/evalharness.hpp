#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/edge_split.hpp"
#include "mtgrl/graphstore/graph.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/rng.hpp"

namespace mtgrl {

/// Frozen node representations, one row per graph node.
struct EmbeddingTable {
  DenseMatrix values;
  std::string checkpoint_id;
  std::string graph_id;

  void validate(std::size_t nodes) const {
    if (values.rows() != nodes) {
      throw DimensionError("embedding table has " + std::to_string(values.rows()) +
                           " rows for " + std::to_string(nodes) + " nodes");
    }
    if (!all_finite(values)) throw NumericError("embedding table is not finite");
  }
};

// --- node splits ---------------------------------------------------------------

struct NodeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded 10/10/80 split of [0, n).
inline NodeSplit split_nodes(std::size_t n, std::uint64_t seed,
                             std::array<double, 3> ratios = {0.1, 0.1, 0.8}) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream({seed, stream::kProbe, 0});
  std::shuffle(order.begin(), order.end(), rng);
  const double total = ratios[0] + ratios[1] + ratios[2];
  const auto n_train =
      static_cast<std::size_t>(std::llround(ratios[0] / total * static_cast<double>(n)));
  const auto n_val = std::min(
      n - n_train,
      static_cast<std::size_t>(std::llround(ratios[1] / total * static_cast<double>(n))));
  NodeSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

// --- logistic regression ---------------------------------------------------------

struct LogisticOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

/// Softmax regression on standardised features. Standardisation statistics
/// come from the training rows.
struct LogisticModel {
  std::vector<double> mean;
  std::vector<double> scale;
  DenseMatrix weights;  // d x C
  std::vector<double> bias;

  std::size_t classes() const noexcept { return bias.size(); }

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> z = bias;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double v = (x[j] - mean[j]) / scale[j];
      if (v == 0.0) continue;
      const auto w = weights.row(j);
      for (std::size_t c = 0; c < z.size(); ++c) z[c] += v * w[c];
    }
    return z;
  }

  /// argmax of the logits; ties go to the lowest class.
  int predict(std::span<const double> x) const {
    const auto z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

/// Full-batch gradient descent on mean cross-entropy + (l2/2)||W||^2. Reads
/// only the rows listed in `train_rows`.
inline LogisticModel fit_logistic(const DenseMatrix& x, std::span<const int> labels,
                                  std::span<const std::size_t> train_rows, std::size_t classes,
                                  const LogisticOptions& opt = {}) {
  if (train_rows.empty()) throw SplitError("logistic probe: empty training split");
  const std::size_t d = x.cols();
  const std::size_t n = train_rows.size();
  std::set<int> seen;
  for (std::size_t r : train_rows) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ContractError("logistic probe: label out of range");
    }
    seen.insert(labels[r]);
  }
  if (seen.size() < 2) throw SplitError("logistic probe: training split has a single class");

  LogisticModel model;
  model.mean.assign(d, 0.0);
  model.scale.assign(d, 0.0);
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < d; ++j) model.mean[j] += x(r, j);
  for (double& m : model.mean) m /= static_cast<double>(n);
  for (std::size_t r : train_rows)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(r, j) - model.mean[j];
      model.scale[j] += c * c;
    }
  for (double& s : model.scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }

  DenseMatrix z(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      z(i, j) = (x(train_rows[i], j) - model.mean[j]) / model.scale[j];

  model.weights = DenseMatrix(d, classes);
  model.bias.assign(classes, 0.0);
  DenseMatrix resid(n, classes);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    DenseMatrix scores = matmul(z, model.weights);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = scores.row(i);
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < classes; ++c) {
        row[c] += model.bias[c];
        top = std::max(top, row[c]);
      }
      double total = 0.0;
      for (double& v : row) {
        v = std::exp(v - top);
        total += v;
      }
      const int y = labels[train_rows[i]];
      for (std::size_t c = 0; c < classes; ++c)
        resid(i, c) = (row[c] / total - (static_cast<int>(c) == y ? 1.0 : 0.0)) /
                      static_cast<double>(n);
    }
    DenseMatrix gw = matmul_tn(z, resid);
    for (std::size_t i = 0; i < gw.size(); ++i) {
      gw[i] += opt.l2 * model.weights[i];
      model.weights[i] -= opt.learning_rate * gw[i];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) gb += resid(i, c);
      model.bias[c] -= opt.learning_rate * gb;
    }
  }
  return model;
}

inline std::size_t class_count(std::span<const int> labels) {
  int top = -1;
  for (int y : labels) {
    if (y < 0) throw ContractError("labels must be non-negative");
    top = std::max(top, y);
  }
  return static_cast<std::size_t>(top + 1);
}

/// Test accuracy of a logistic probe on a seeded 10/10/80 node split.
inline double logistic_probe(const DenseMatrix& emb, std::span<const int> labels,
                             std::uint64_t seed, const LogisticOptions& opt = {}) {
  if (labels.size() != emb.rows()) throw DimensionError("probe: label count != embedding rows");
  const NodeSplit split = split_nodes(emb.rows(), seed);
  if (split.test.empty()) throw SplitError("probe: empty test split");
  const LogisticModel model = fit_logistic(emb, labels, split.train, class_count(labels), opt);
  std::size_t correct = 0;
  for (std::size_t r : split.test)
    if (model.predict(emb.row(r)) == labels[r]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

/// logistic_probe with partition ids as the target.
inline double partition_probe(const DenseMatrix& emb, std::span<const int> partition,
                              std::uint64_t seed, const LogisticOptions& opt = {}) {
  return logistic_probe(emb, partition, seed, opt);
}

// --- clustering ------------------------------------------------------------------

inline double entropy_of_counts(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  return h;
}

/// I(A;B) / ((H(A)+H(B))/2) with natural logs. Two single-cluster partitions
/// score 1.
inline double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DimensionError("nmi: label vectors differ in length");
  if (a.empty()) throw ContractError("nmi: empty labelling");
  std::map<int, double> ca;
  std::map<int, double> cb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    joint[{a[i], b[i]}] += 1.0;
  }
  auto values = [](const auto& m) {
    std::vector<double> v;
    for (const auto& [k, c] : m) v.push_back(c);
    return v;
  };
  const double n = static_cast<double>(a.size());
  const double ha = entropy_of_counts(values(ca), n);
  const double hb = entropy_of_counts(values(cb), n);
  const double hab = entropy_of_counts(values(joint), n);
  const double denom = 0.5 * (ha + hb);
  if (denom <= 0.0) return 1.0;
  const double mi = ha + hb - hab;
  return std::clamp(mi / denom, 0.0, 1.0);
}

struct KMeansResult {
  std::vector<int> assignment;
  DenseMatrix centroids;
  double inertia = 0.0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Lloyd's algorithm from a k-means++ start.
inline KMeansResult kmeans_once(const DenseMatrix& x, std::size_t k, Rng& rng,
                                std::size_t max_iterations = 300) {
  const std::size_t n = x.rows();
  KMeansResult r;
  r.centroids = DenseMatrix(k, x.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy(x.row(pick).begin(), x.row(pick).end(), r.centroids.row(0).begin());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(x.row(i), r.centroids.row(c - 1)));
      total += nearest[i];
    }
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    std::copy(x.row(pick).begin(), x.row(pick).end(), r.centroids.row(c).begin());
  }

  r.assignment.assign(n, -1);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = false;
    r.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(x.row(i), r.centroids.row(c));
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      r.inertia += best_d;
      if (r.assignment[i] != best) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    DenseMatrix sums(k, x.cols());
    std::vector<double> counts(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignment[i]);
      counts[c] += 1.0;
      auto s = sums.row(c);
      const auto xi = x.row(i);
      for (std::size_t j = 0; j < xi.size(); ++j) s[j] += xi[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0.0) continue;  // empty cluster keeps its centroid
      auto dst = r.centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < s.size(); ++j) dst[j] = s[j] / counts[c];
    }
  }
  return r;
}

/// Best-inertia clustering over `restarts` seeded k-means++ runs.
inline KMeansResult kmeans(const DenseMatrix& x, std::size_t k, std::uint64_t seed,
                           std::size_t restarts = 10) {
  if (k < 2) throw ContractError("kmeans: k must be >= 2");
  if (k > x.rows()) throw ContractError("kmeans: k exceeds the number of points");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = make_stream({seed, stream::kProbe, 1, r});
    KMeansResult run = kmeans_once(x, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

inline double kmeans_nmi(const DenseMatrix& emb, std::span<const int> labels, std::size_t k,
                         std::uint64_t seed) {
  if (labels.size() != emb.rows()) throw DimensionError("kmeans_nmi: label count mismatch");
  const KMeansResult r = kmeans(emb, k, seed);
  return normalized_mutual_information(r.assignment, labels);
}

// --- link prediction -------------------------------------------------------------

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(equal).
inline double roc_auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw ContractError("auc: empty score list");
  std::vector<std::pair<double, bool>> all;
  for (double s : positives) all.emplace_back(s, true);
  for (double s : negatives) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;  // midranks of positives, 1-based
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (all[t].second) rank_sum += mid;
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

inline DenseMatrix hadamard_pair_features(const DenseMatrix& emb, std::span<const Edge> pairs) {
  DenseMatrix f(pairs.size(), emb.cols());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto u = emb.row(pairs[i].first);
    const auto v = emb.row(pairs[i].second);
    auto out = f.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = u[j] * v[j];
  }
  return f;
}

/// Test AUC of a logistic scorer on Hadamard edge features, trained on the
/// split's train positives and negatives. `emb` must come from the
/// train-edge-only graph.
inline double link_pred_auc(const DenseMatrix& emb, const EdgeSplit& split,
                            const LogisticOptions& opt = {}) {
  if (split.test_pos.empty() || split.test_neg.empty()) {
    throw ContractError("link prediction: empty test split");
  }
  std::vector<Edge> train = split.train_pos;
  train.insert(train.end(), split.train_neg.begin(), split.train_neg.end());
  std::vector<int> y(train.size(), 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(split.train_pos.size()), 1);
  std::vector<std::size_t> rows(train.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const LogisticModel model = fit_logistic(hadamard_pair_features(emb, train), y, rows, 2, opt);
  auto score = [&](const std::vector<Edge>& pairs) {
    const DenseMatrix f = hadamard_pair_features(emb, pairs);
    std::vector<double> s;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto z = model.logits(f.row(i));
      s.push_back(z[1] - z[0]);
    }
    return s;
  };
  return roc_auc(score(split.test_pos), score(split.test_neg));
}

// --- downstream suite ------------------------------------------------------------

enum class DownstreamTask : std::size_t {
  NodeClassification = 0,
  NodeClustering = 1,
  LinkPrediction = 2,
  PartitionPrediction = 3,
};

inline constexpr std::size_t kDownstreamCount = 4;
inline constexpr std::array<DownstreamTask, kDownstreamCount> kDownstreamTasks = {
    DownstreamTask::NodeClassification, DownstreamTask::NodeClustering,
    DownstreamTask::LinkPrediction, DownstreamTask::PartitionPrediction};

inline const char* downstream_name(DownstreamTask t) noexcept {
  switch (t) {
    case DownstreamTask::NodeClassification: return "node_classification";
    case DownstreamTask::NodeClustering: return "node_clustering";
    case DownstreamTask::LinkPrediction: return "link_prediction";
    case DownstreamTask::PartitionPrediction: return "partition_prediction";
  }
  return "?";
}

inline const char* metric_name(DownstreamTask t) noexcept {
  switch (t) {
    case DownstreamTask::NodeClassification: return "accuracy";
    case DownstreamTask::NodeClustering: return "nmi";
    case DownstreamTask::LinkPrediction: return "auc";
    case DownstreamTask::PartitionPrediction: return "accuracy";
  }
  return "?";
}

using DownstreamMetrics = std::array<double, kDownstreamCount>;

/// The four probes for one evaluation seed. `full` embeds the whole graph,
/// `train_only` embeds the graph restricted to the split's train edges.
inline DownstreamMetrics evaluate_downstream(const DenseMatrix& full, const DenseMatrix& train_only,
                                             std::span<const int> labels,
                                             std::span<const int> partition,
                                             const EdgeSplit& split, std::uint64_t seed) {
  DownstreamMetrics m{};
  m[0] = logistic_probe(full, labels, seed);
  m[1] = kmeans_nmi(full, labels, class_count(labels), seed);
  m[2] = link_pred_auc(train_only, split);
  m[3] = partition_probe(full, partition, seed);
  return m;
}

// --- aggregation -------------------------------------------------------------------

/// Metric values of one method, one entry per run, per task.
struct MethodMetrics {
  std::string method;
  std::map<std::string, std::vector<double>> runs;
};

struct TaskSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over runs
  int rank = 0;      // dense, 1 = best
};

struct MethodSummary {
  std::string method;
  std::map<std::string, TaskSummary> tasks;
  double average = 0.0;  // mean of the per-task means
  double average_rank = 0.0;
};

struct MetricReport {
  std::vector<std::string> tasks;
  std::vector<MethodSummary> methods;
};

/// Per-task mean/std, dense ranks on the means (higher is better, equal means
/// share the better rank), average metric and average rank per method.
inline MetricReport aggregate_report(const std::vector<MethodMetrics>& methods,
                                     const std::vector<std::string>& tasks) {
  if (methods.empty()) throw ReportError("report: no methods");
  if (tasks.empty()) throw ReportError("report: no tasks");
  MetricReport rep;
  rep.tasks = tasks;
  for (const auto& m : methods) {
    MethodSummary s;
    s.method = m.method;
    for (const auto& t : tasks) {
      auto it = m.runs.find(t);
      if (it == m.runs.end() || it->second.empty()) {
        throw ReportError("report: method '" + m.method + "' has no value for task '" + t + "'");
      }
      const auto& v = it->second;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      s.tasks[t] = {mean, std::sqrt(var / static_cast<double>(v.size())), 0};
      s.average += mean;
    }
    s.average /= static_cast<double>(tasks.size());
    rep.methods.push_back(std::move(s));
  }
  for (const auto& t : tasks) {
    std::vector<double> distinct;
    for (const auto& s : rep.methods) distinct.push_back(s.tasks.at(t).mean);
    std::sort(distinct.begin(), distinct.end(), std::greater<>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (auto& s : rep.methods) {
      auto& ts = s.tasks.at(t);
      ts.rank = static_cast<int>(std::find(distinct.begin(), distinct.end(), ts.mean) -
                                 distinct.begin()) +
                1;
    }
  }
  for (auto& s : rep.methods) {
    double r = 0.0;
    for (const auto& t : tasks) r += s.tasks.at(t).rank;
    s.average_rank = r / static_cast<double>(tasks.size());
  }
  return rep;
}

}  // namespace mtgrl
