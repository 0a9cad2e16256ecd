#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/graphstore/graph.hpp"

namespace mtgrl {

namespace io_detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, const std::filesystem::path& file, std::size_t line) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw FormatError(file.string() + ":" + std::to_string(line) + ": cannot parse '" +
                      std::string(text) + "'");
  }
  return value;
}

inline std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("missing or unreadable file " + file.string());
  return in;
}

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace io_detail

/// Writes meta.txt, edges.tsv, features.tsv and (if labelled) labels.tsv.
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream meta(dir / "meta.txt", std::ios::binary);
    meta << "n=" << g.n() << "\n"
         << "d=" << g.feature_dim() << "\n"
         << "has_labels=" << (g.labels ? 1 : 0) << "\n";
  }
  {
    std::ofstream edges(dir / "edges.tsv", std::ios::binary);
    for (auto [u, v] : g.adjacency.edges()) edges << u << '\t' << v << '\n';
  }
  {
    std::ofstream feats(dir / "features.tsv", std::ios::binary);
    for (std::size_t i = 0; i < g.n(); ++i) {
      auto row = g.features.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) feats << '\t';
        feats << io_detail::format_double(row[j]);
      }
      feats << '\n';
    }
  }
  if (g.labels) {
    std::ofstream labels(dir / "labels.tsv", std::ios::binary);
    for (int y : *g.labels) labels << y << '\n';
  }
  if (!std::filesystem::exists(dir / "meta.txt")) {
    throw FormatError("failed to write graph to " + dir.string());
  }
}

inline Graph load_graph(const std::filesystem::path& dir) {
  using io_detail::parse_number;
  std::size_t n = 0;
  std::size_t d = 0;
  int has_labels = -1;
  {
    const auto file = dir / "meta.txt";
    auto in = io_detail::open_input(file);
    std::string line;
    bool seen_n = false;
    bool seen_d = false;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      line = io_detail::strip_cr(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError(file.string() + ":" + std::to_string(lineno) + ": expected key=value");
      }
      const std::string key = line.substr(0, eq);
      const std::string_view value = std::string_view(line).substr(eq + 1);
      if (key == "n") {
        n = parse_number<std::size_t>(value, file, lineno);
        seen_n = true;
      } else if (key == "d") {
        d = parse_number<std::size_t>(value, file, lineno);
        seen_d = true;
      } else if (key == "has_labels") {
        has_labels = parse_number<int>(value, file, lineno);
        if (has_labels != 0 && has_labels != 1) {
          throw FormatError(file.string() + ":" + std::to_string(lineno) +
                            ": has_labels must be 0 or 1");
        }
      } else {
        throw FormatError(file.string() + ":" + std::to_string(lineno) + ": unknown key '" +
                          key + "'");
      }
    }
    if (!seen_n || !seen_d || has_labels < 0) {
      throw FormatError(file.string() + ": requires n, d and has_labels");
    }
  }

  std::vector<Edge> edges;
  {
    const auto file = dir / "edges.tsv";
    auto in = io_detail::open_input(file);
    std::set<Edge> seen;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      line = io_detail::strip_cr(line);
      if (line.empty()) continue;
      const auto fields = io_detail::split_tabs(line);
      const std::string where = file.string() + ":" + std::to_string(lineno) + ": ";
      if (fields.size() != 2) throw FormatError(where + "expected 'u<TAB>v'");
      const auto u = parse_number<std::size_t>(fields[0], file, lineno);
      const auto v = parse_number<std::size_t>(fields[1], file, lineno);
      if (u >= n || v >= n) throw FormatError(where + "node index out of range (n=" +
                                              std::to_string(n) + ")");
      if (u >= v) throw FormatError(where + "edge must satisfy u < v");
      if (!seen.emplace(u, v).second) throw FormatError(where + "duplicate edge");
      edges.emplace_back(u, v);
    }
  }

  DenseMatrix features(n, d);
  {
    const auto file = dir / "features.tsv";
    auto in = io_detail::open_input(file);
    std::string line;
    std::size_t row = 0;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      line = io_detail::strip_cr(line);
      if (line.empty()) continue;
      const std::string where = file.string() + ":" + std::to_string(lineno) + ": ";
      if (row >= n) throw FormatError(where + "more than n feature rows");
      const auto fields = io_detail::split_tabs(line);
      if (fields.size() != d) throw FormatError(where + "expected d=" + std::to_string(d) +
                                                " values");
      for (std::size_t j = 0; j < d; ++j) features(row, j) = parse_number<double>(fields[j], file, lineno);
      ++row;
    }
    if (row != n) throw FormatError(file.string() + ": expected " + std::to_string(n) + " rows");
  }

  std::optional<std::vector<int>> labels;
  if (has_labels == 1) {
    const auto file = dir / "labels.tsv";
    auto in = io_detail::open_input(file);
    std::vector<int> ys;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      line = io_detail::strip_cr(line);
      if (line.empty()) continue;
      if (ys.size() >= n) {
        throw FormatError(file.string() + ":" + std::to_string(lineno) + ": more than n labels");
      }
      ys.push_back(parse_number<int>(line, file, lineno));
    }
    if (ys.size() != n) throw FormatError(file.string() + ": expected " + std::to_string(n) +
                                          " labels");
    labels = std::move(ys);
  }
  return Graph::from_edges(n, edges, std::move(features), std::move(labels));
}

}  // namespace mtgrl
