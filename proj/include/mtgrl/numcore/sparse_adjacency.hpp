#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"

namespace mtgrl {

/// Undirected edge with u < v.
using Edge = std::pair<std::size_t, std::size_t>;

/// CSR adjacency. Column indices are strictly increasing inside each row, so
/// duplicates are impossible and edge lookup is a binary search.
class SparseAdjacency {
 public:
  SparseAdjacency() : row_offsets_{0} {}

  /// Validates every structural invariant; throws ContractError on violation.
  SparseAdjacency(std::size_t n, std::vector<std::size_t> row_offsets,
                  std::vector<std::size_t> col_indices, std::vector<double> values,
                  bool undirected = false)
      : n_(n),
        row_offsets_(std::move(row_offsets)),
        col_indices_(std::move(col_indices)),
        values_(std::move(values)),
        undirected_(undirected) {
    validate();
  }

  /// Builds a symmetric 0/1 adjacency from undirected edges. Self-loops and
  /// repeated pairs are rejected.
  static SparseAdjacency from_undirected_edges(std::size_t n, std::span<const Edge> edges) {
    std::vector<std::size_t> degree(n, 0);
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) {
        throw ContractError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                            ") out of range for n=" + std::to_string(n));
      }
      if (u == v) throw ContractError("self-loop at node " + std::to_string(u));
      ++degree[u];
      ++degree[v];
    }
    std::vector<std::size_t> offsets(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + degree[i];
    std::vector<std::size_t> cols(offsets[n]);
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (auto [u, v] : edges) {
      cols[cursor[u]++] = v;
      cols[cursor[v]++] = u;
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::sort(cols.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                cols.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
    }
    std::vector<double> vals(cols.size(), 1.0);
    return SparseAdjacency(n, std::move(offsets), std::move(cols), std::move(vals), true);
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t nnz() const noexcept { return col_indices_.size(); }
  bool undirected() const noexcept { return undirected_; }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::size_t> neighbors(std::size_t u) const noexcept {
    return {col_indices_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
  }
  std::span<const double> row_values(std::size_t u) const noexcept {
    return {values_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
  }
  std::size_t degree(std::size_t u) const noexcept {
    return row_offsets_[u + 1] - row_offsets_[u];
  }

  bool has_edge(std::size_t u, std::size_t v) const noexcept {
    if (u >= n_ || v >= n_) return false;
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  /// Undirected edge list (u < v) in row-major order. Only meaningful for
  /// symmetric adjacencies.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(nnz() / 2);
    for (std::size_t u = 0; u < n_; ++u)
      for (std::size_t v : neighbors(u))
        if (u < v) out.emplace_back(u, v);
    return out;
  }

  std::size_t num_undirected_edges() const {
    std::size_t count = 0;
    for (std::size_t u = 0; u < n_; ++u)
      for (std::size_t v : neighbors(u))
        if (u < v) ++count;
    return count;
  }

  /// S * B
  DenseMatrix multiply(const DenseMatrix& b) const {
    if (b.rows() != n_) {
      throw DimensionError("spmm: " + std::to_string(n_) + "x" + std::to_string(n_) + " * " +
                           b.shape_string());
    }
    DenseMatrix c(n_, b.cols());
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < n_; ++i) {
      double* out = c.row(i).data();
      for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
        const double w = values_[p];
        const double* in = b.row(col_indices_[p]).data();
        for (std::size_t j = 0; j < m; ++j) out[j] += w * in[j];
      }
    }
    return c;
  }

  /// S^T * B
  DenseMatrix multiply_transposed(const DenseMatrix& b) const {
    if (b.rows() != n_) {
      throw DimensionError("spmm^T: " + std::to_string(n_) + "x" + std::to_string(n_) + " * " +
                           b.shape_string());
    }
    DenseMatrix c(n_, b.cols());
    const std::size_t m = b.cols();
    for (std::size_t i = 0; i < n_; ++i) {
      const double* in = b.row(i).data();
      for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
        const double w = values_[p];
        double* out = c.row(col_indices_[p]).data();
        for (std::size_t j = 0; j < m; ++j) out[j] += w * in[j];
      }
    }
    return c;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p)
        d(i, col_indices_[p]) = values_[p];
    return d;
  }

  /// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
  SparseAdjacency sym_normalized_with_self_loops() const {
    std::vector<std::size_t> offsets(n_ + 1, 0);
    std::vector<std::size_t> cols;
    std::vector<double> vals;
    cols.reserve(nnz() + n_);
    vals.reserve(nnz() + n_);
    std::vector<double> inv_sqrt(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double d = 1.0;
      for (double w : row_values(i)) d += w;
      inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    for (std::size_t i = 0; i < n_; ++i) {
      bool self_done = false;
      auto nb = neighbors(i);
      auto wv = row_values(i);
      for (std::size_t p = 0; p < nb.size(); ++p) {
        if (!self_done && nb[p] > i) {
          cols.push_back(i);
          vals.push_back(inv_sqrt[i] * inv_sqrt[i]);
          self_done = true;
        }
        double w = wv[p];
        if (nb[p] == i) {
          w += 1.0;
          self_done = true;
        }
        cols.push_back(nb[p]);
        vals.push_back(w * inv_sqrt[i] * inv_sqrt[nb[p]]);
      }
      if (!self_done) {
        cols.push_back(i);
        vals.push_back(inv_sqrt[i] * inv_sqrt[i]);
      }
      offsets[i + 1] = cols.size();
    }
    return SparseAdjacency(n_, std::move(offsets), std::move(cols), std::move(vals), undirected_);
  }

  bool operator==(const SparseAdjacency&) const = default;

 private:
  void validate() const {
    if (row_offsets_.size() != n_ + 1) throw ContractError("row_offsets must have n+1 entries");
    if (row_offsets_.front() != 0) throw ContractError("row_offsets must start at 0");
    if (row_offsets_.back() != col_indices_.size()) {
      throw ContractError("row_offsets must end at nnz");
    }
    if (values_.size() != col_indices_.size()) {
      throw ContractError("values and col_indices length differ");
    }
    for (std::size_t i = 0; i < n_; ++i) {
      if (row_offsets_[i + 1] < row_offsets_[i]) throw ContractError("row_offsets decreasing");
      for (std::size_t p = row_offsets_[i]; p < row_offsets_[i + 1]; ++p) {
        if (col_indices_[p] >= n_) throw ContractError("column index out of range");
        if (p > row_offsets_[i] && col_indices_[p] <= col_indices_[p - 1]) {
          throw ContractError("duplicate or unsorted column in row " + std::to_string(i));
        }
      }
    }
    if (undirected_) {
      for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j : neighbors(i))
          if (!has_edge(j, i)) throw ContractError("adjacency flagged undirected is not symmetric");
    }
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> row_offsets_;
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
  bool undirected_ = false;
};

}  // namespace mtgrl
