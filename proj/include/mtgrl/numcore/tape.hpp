#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtgrl/error.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/numcore/sparse_adjacency.hpp"

namespace mtgrl {

enum class Op {
  Input,
  Parameter,
  Constant,
  MatMul,
  MatMulNT,
  MatMulTN,
  SpMM,
  Add,
  Sub,
  Hadamard,
  MulConst,
  Scale,
  AddScalar,
  PReLU,
  Sigmoid,
  Softplus,
  Log,
  Exp,
  GatherRows,
  MeanRows,
  RepeatRows,
  RowL2Normalize,
  ColStandardize,
  FrobeniusNorm,
  HConcat,
  Sum,
  RowSum,
  Transpose,
};

inline const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::MatMulTN: return "matmul_tn";
    case Op::SpMM: return "spmm";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Hadamard: return "hadamard";
    case Op::MulConst: return "mul_const";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::PReLU: return "prelu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::GatherRows: return "gather_rows";
    case Op::MeanRows: return "mean_rows";
    case Op::RepeatRows: return "repeat_rows";
    case Op::RowL2Normalize: return "row_l2_normalize";
    case Op::ColStandardize: return "col_standardize";
    case Op::FrobeniusNorm: return "frobenius_norm";
    case Op::HConcat: return "hconcat";
    case Op::Sum: return "sum";
    case Op::RowSum: return "row_sum";
    case Op::Transpose: return "transpose";
  }
  return "?";
}

inline std::optional<Op> parse_op(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(Op::Transpose); ++i)
    if (name == op_name(static_cast<Op>(i))) return static_cast<Op>(i);
  return std::nullopt;
}

/// Handle to a node of a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Recorded computation over DenseMatrix values with reverse-mode adjoints.
///
/// Every builder call evaluates eagerly, so constructing the expression is the
/// first forward pass. forward_eval() rebinds named leaves and replays the
/// recording, which is what finite-difference checking relies on. The root is
/// the most recently created node unless set_root() says otherwise.
class Tape {
 public:
  static constexpr double kNormEpsilon = 1e-8;
  static constexpr double kStandardizeEpsilon = 1e-8;

  // --- leaves -------------------------------------------------------------

  Var input(const std::string& name, DenseMatrix value) {
    return add_leaf(Op::Input, name, std::move(value));
  }
  Var parameter(const std::string& name, DenseMatrix value) {
    return add_leaf(Op::Parameter, name, std::move(value));
  }
  Var constant(DenseMatrix value) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    return push(std::move(n));
  }

  // --- primitives ---------------------------------------------------------

  Var matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
  /// a * b^T
  Var matmul_nt(Var a, Var b) { return binary(Op::MatMulNT, a, b); }
  /// a^T * b
  Var matmul_tn(Var a, Var b) { return binary(Op::MatMulTN, a, b); }

  Var spmm(std::shared_ptr<const SparseAdjacency> s, Var b) {
    Node n;
    n.op = Op::SpMM;
    n.a = b.id;
    n.sparse = std::move(s);
    return push(std::move(n));
  }

  /// Elementwise sum. `b` may also be a 1xc row, rx1 column or 1x1 scalar,
  /// broadcast over `a`.
  Var add(Var a, Var b) { return binary(Op::Add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::Sub, a, b); }
  Var hadamard(Var a, Var b) { return binary(Op::Hadamard, a, b); }

  /// Elementwise product with a fixed matrix (masks).
  Var mul_const(Var a, DenseMatrix k) {
    Node n;
    n.op = Op::MulConst;
    n.a = a.id;
    n.constant = std::make_shared<const DenseMatrix>(std::move(k));
    return push(std::move(n));
  }

  Var scale(Var a, double s) { return unary(Op::Scale, a, s); }
  Var add_scalar(Var a, double s) { return unary(Op::AddScalar, a, s); }
  Var prelu(Var a, double slope = 0.25) { return unary(Op::PReLU, a, slope); }
  Var sigmoid(Var a) { return unary(Op::Sigmoid, a); }
  /// log(1 + exp(x)), evaluated without overflow.
  Var softplus(Var a) { return unary(Op::Softplus, a); }
  Var log(Var a) { return unary(Op::Log, a); }
  Var exp(Var a) { return unary(Op::Exp, a); }

  Var gather_rows(Var a, std::vector<std::size_t> rows) {
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    n.indices = std::move(rows);
    return push(std::move(n));
  }

  /// n x d -> 1 x d
  Var mean_rows(Var a) { return unary(Op::MeanRows, a); }

  /// 1 x d -> count x d
  Var repeat_rows(Var a, std::size_t count) {
    Node n;
    n.op = Op::RepeatRows;
    n.a = a.id;
    n.count = count;
    return push(std::move(n));
  }

  /// Each row divided by max(||row||, eps).
  Var row_l2_normalize(Var a, double eps = kNormEpsilon) {
    return unary(Op::RowL2Normalize, a, eps);
  }
  /// Each column shifted to zero mean and divided by sqrt(var + eps)
  /// (population variance).
  Var col_standardize(Var a, double eps = kStandardizeEpsilon) {
    return unary(Op::ColStandardize, a, eps);
  }
  Var frobenius_norm(Var a) { return unary(Op::FrobeniusNorm, a); }
  Var hconcat(Var a, Var b) { return binary(Op::HConcat, a, b); }
  Var sum(Var a) { return unary(Op::Sum, a); }
  /// n x d -> n x 1
  Var row_sum(Var a) { return unary(Op::RowSum, a); }
  Var transpose(Var a) { return unary(Op::Transpose, a); }

  // --- evaluation ---------------------------------------------------------

  void set_root(Var v) {
    check(v);
    root_ = v.id;
  }
  Var root() const {
    if (nodes_.empty()) throw ContractError("tape is empty");
    return Var{root_.value_or(nodes_.size() - 1)};
  }

  const DenseMatrix& value(Var v) const {
    check(v);
    return nodes_[v.id].value;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  bool has_leaf(const std::string& name) const { return leaves_.contains(name); }

  const DenseMatrix& leaf_value(const std::string& name) const {
    return nodes_[leaf_id(name)].value;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& n : nodes_)
      if (n.op == Op::Parameter) out.push_back(n.name);
    return out;
  }

  /// Rebinds the named leaves and replays every recorded operation.
  /// Returns the root value.
  const DenseMatrix& forward_eval(const std::map<std::string, DenseMatrix>& bindings = {}) {
    for (const auto& [name, value] : bindings) {
      Node& leaf = nodes_[leaf_id(name)];
      if (!leaf.value.same_shape(value)) {
        throw DimensionError("forward_eval: binding '" + name + "' has shape " +
                             value.shape_string() + ", expected " + leaf.value.shape_string());
      }
      leaf.value = value;
    }
    for (Node& n : nodes_) {
      if (n.op != Op::Input && n.op != Op::Parameter && n.op != Op::Constant) compute(n);
    }
    adjoints_.clear();
    return nodes_[root().id].value;
  }

  /// Reverse sweep from the scalar root. Returns gradients for the requested
  /// parameters (all parameters when `names` is empty); parameters the root
  /// does not depend on get zeros.
  std::map<std::string, DenseMatrix> backward(const std::vector<std::string>& names = {}) {
    const std::size_t r = root().id;
    if (!nodes_[r].value.is_scalar()) {
      throw ContractError("backward: root is " + nodes_[r].value.shape_string() +
                          ", expected a scalar");
    }
    adjoints_.assign(nodes_.size(), DenseMatrix());
    adjoints_[r] = DenseMatrix::scalar(1.0);
    for (std::size_t i = r + 1; i-- > 0;) {
      if (adjoints_[i].empty() || !nodes_[i].requires_grad) continue;
      propagate(i);
    }
    std::map<std::string, DenseMatrix> out;
    const auto wanted = names.empty() ? parameter_names() : names;
    for (const auto& name : wanted) {
      const std::size_t id = leaf_id(name);
      if (nodes_[id].op != Op::Parameter) {
        throw ContractError("backward: '" + name + "' is not a parameter");
      }
      out.emplace(name, adjoints_[id].empty()
                            ? DenseMatrix(nodes_[id].value.rows(), nodes_[id].value.cols())
                            : adjoints_[id]);
    }
    return out;
  }

  /// Adjoint of any node after backward(); zeros if it received none.
  DenseMatrix adjoint(Var v) const {
    check(v);
    if (v.id < adjoints_.size() && !adjoints_[v.id].empty()) return adjoints_[v.id];
    return DenseMatrix(nodes_[v.id].value.rows(), nodes_[v.id].value.cols());
  }

  /// Test hook: scales every adjoint contribution emitted by `op`.
  void inject_adjoint_fault(Op op, double factor) { faults_[op] = factor; }

 private:
  struct Node {
    Op op = Op::Constant;
    std::size_t a = npos;
    std::size_t b = npos;
    double scalar = 0.0;
    std::size_t count = 0;
    std::shared_ptr<const SparseAdjacency> sparse;
    std::shared_ptr<const DenseMatrix> constant;
    std::vector<std::size_t> indices;
    std::string name;
    DenseMatrix value;
    DenseMatrix aux;
    bool requires_grad = false;
  };

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  void check(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  }

  std::size_t leaf_id(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ContractError("tape has no leaf named '" + name + "'");
    return it->second;
  }

  Var add_leaf(Op op, const std::string& name, DenseMatrix value) {
    if (leaves_.contains(name)) throw ContractError("duplicate leaf name '" + name + "'");
    if (!all_finite(value)) throw NumericError("leaf '" + name + "' holds non-finite values");
    Node n;
    n.op = op;
    n.name = name;
    n.value = std::move(value);
    n.requires_grad = op == Op::Parameter;
    leaves_.emplace(name, nodes_.size());
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var unary(Op op, Var a, double scalar = 0.0) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.scalar = scalar;
    return push(std::move(n));
  }

  Var binary(Op op, Var a, Var b) {
    check(b);
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    return push(std::move(n));
  }

  Var push(Node n) {
    if (n.a != npos) check(Var{n.a});
    n.requires_grad = (n.a != npos && nodes_[n.a].requires_grad) ||
                      (n.b != npos && nodes_[n.b].requires_grad);
    compute(n);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  static DenseMatrix broadcast_combine(const DenseMatrix& x, const DenseMatrix& y, double sign,
                                       const char* what) {
    DenseMatrix out = x;
    if (x.same_shape(y)) {
      axpy(sign, y, out);
    } else if (y.is_scalar()) {
      for (double& v : out.data()) v += sign * y[0];
    } else if (y.rows() == 1 && y.cols() == x.cols()) {
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += sign * y(0, j);
    } else if (y.cols() == 1 && y.rows() == x.rows()) {
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += sign * y(i, 0);
    } else {
      throw DimensionError(std::string(what) + ": cannot broadcast " + y.shape_string() +
                           " onto " + x.shape_string());
    }
    return out;
  }

  static DenseMatrix reduce_to(const DenseMatrix& g, const DenseMatrix& shape) {
    if (g.same_shape(shape)) return g;
    DenseMatrix out(shape.rows(), shape.cols());
    if (shape.is_scalar()) {
      for (double v : g.data()) out[0] += v;
    } else if (shape.rows() == 1) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) out(0, j) += g(i, j);
    } else {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) out(i, 0) += g(i, j);
    }
    return out;
  }

  template <class F>
  static DenseMatrix map(const DenseMatrix& x, F f) {
    DenseMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
  }

  static double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  static double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  void compute(Node& n) const {
    const DenseMatrix* a = n.a != npos ? &nodes_[n.a].value : nullptr;
    const DenseMatrix* b = n.b != npos ? &nodes_[n.b].value : nullptr;
    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant:
        return;
      case Op::MatMul: n.value = mtgrl::matmul(*a, *b); break;
      case Op::MatMulNT: n.value = mtgrl::matmul_nt(*a, *b); break;
      case Op::MatMulTN: n.value = mtgrl::matmul_tn(*a, *b); break;
      case Op::SpMM: n.value = n.sparse->multiply(*a); break;
      case Op::Add: n.value = broadcast_combine(*a, *b, 1.0, "add"); break;
      case Op::Sub: n.value = broadcast_combine(*a, *b, -1.0, "sub"); break;
      case Op::Hadamard: {
        require_same_shape(*a, *b, "hadamard");
        n.value = *a;
        for (std::size_t i = 0; i < a->size(); ++i) n.value[i] *= (*b)[i];
        break;
      }
      case Op::MulConst: {
        require_same_shape(*a, *n.constant, "mul_const");
        n.value = *a;
        for (std::size_t i = 0; i < a->size(); ++i) n.value[i] *= (*n.constant)[i];
        break;
      }
      case Op::Scale: {
        const double s = n.scalar;
        n.value = map(*a, [s](double x) { return s * x; });
        break;
      }
      case Op::AddScalar: {
        const double s = n.scalar;
        n.value = map(*a, [s](double x) { return x + s; });
        break;
      }
      case Op::PReLU: {
        const double s = n.scalar;
        n.value = map(*a, [s](double x) { return x > 0.0 ? x : s * x; });
        break;
      }
      case Op::Sigmoid: n.value = map(*a, sigmoid_value); break;
      case Op::Softplus: n.value = map(*a, softplus_value); break;
      case Op::Log: n.value = map(*a, [](double x) { return std::log(x); }); break;
      case Op::Exp: n.value = map(*a, [](double x) { return std::exp(x); }); break;
      case Op::GatherRows: {
        n.value = DenseMatrix(n.indices.size(), a->cols());
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          if (n.indices[r] >= a->rows()) throw DimensionError("gather_rows: index out of range");
          std::copy_n(a->row(n.indices[r]).begin(), a->cols(), n.value.row(r).begin());
        }
        break;
      }
      case Op::MeanRows: {
        if (a->rows() == 0) throw DimensionError("mean_rows: no rows");
        n.value = DenseMatrix(1, a->cols());
        for (std::size_t i = 0; i < a->rows(); ++i)
          for (std::size_t j = 0; j < a->cols(); ++j) n.value(0, j) += (*a)(i, j);
        for (double& v : n.value.data()) v /= static_cast<double>(a->rows());
        break;
      }
      case Op::RepeatRows: {
        if (a->rows() != 1) throw DimensionError("repeat_rows: operand must be a row vector");
        n.value = DenseMatrix(n.count, a->cols());
        for (std::size_t i = 0; i < n.count; ++i)
          std::copy_n(a->row(0).begin(), a->cols(), n.value.row(i).begin());
        break;
      }
      case Op::RowL2Normalize: {
        n.value = *a;
        n.aux = DenseMatrix(a->rows(), 1);
        for (std::size_t i = 0; i < a->rows(); ++i) {
          const double norm = std::sqrt(dot(a->row(i), a->row(i)));
          n.aux(i, 0) = norm;
          const double denom = std::max(norm, n.scalar);
          for (double& v : n.value.row(i)) v /= denom;
        }
        break;
      }
      case Op::ColStandardize: {
        const std::size_t rows = a->rows();
        if (rows == 0) throw DimensionError("col_standardize: no rows");
        n.value = *a;
        n.aux = DenseMatrix(1, a->cols());
        for (std::size_t j = 0; j < a->cols(); ++j) {
          double mean = 0.0;
          for (std::size_t i = 0; i < rows; ++i) mean += (*a)(i, j);
          mean /= static_cast<double>(rows);
          double var = 0.0;
          for (std::size_t i = 0; i < rows; ++i) {
            const double d = (*a)(i, j) - mean;
            var += d * d;
          }
          var /= static_cast<double>(rows);
          const double sd = std::sqrt(var + n.scalar);
          n.aux(0, j) = sd;
          for (std::size_t i = 0; i < rows; ++i) n.value(i, j) = ((*a)(i, j) - mean) / sd;
        }
        break;
      }
      case Op::FrobeniusNorm: n.value = DenseMatrix::scalar(mtgrl::frobenius_norm(*a)); break;
      case Op::HConcat: {
        if (a->rows() != b->rows()) {
          throw DimensionError("hconcat: " + a->shape_string() + " | " + b->shape_string());
        }
        n.value = DenseMatrix(a->rows(), a->cols() + b->cols());
        for (std::size_t i = 0; i < a->rows(); ++i) {
          auto out = n.value.row(i);
          std::copy(a->row(i).begin(), a->row(i).end(), out.begin());
          std::copy(b->row(i).begin(), b->row(i).end(),
                    out.begin() + static_cast<std::ptrdiff_t>(a->cols()));
        }
        break;
      }
      case Op::Sum: {
        double s = 0.0;
        for (double v : a->data()) s += v;
        n.value = DenseMatrix::scalar(s);
        break;
      }
      case Op::RowSum: {
        n.value = DenseMatrix(a->rows(), 1);
        for (std::size_t i = 0; i < a->rows(); ++i) {
          double s = 0.0;
          for (double v : a->row(i)) s += v;
          n.value(i, 0) = s;
        }
        break;
      }
      case Op::Transpose: n.value = mtgrl::transpose(*a); break;
    }
    if (!all_finite(n.value)) {
      throw NumericError(std::string("non-finite value produced by primitive '") +
                         op_name(n.op) + "'");
    }
  }

  void accumulate(std::size_t target, DenseMatrix g, Op source) {
    if (!nodes_[target].requires_grad) return;
    if (auto it = faults_.find(source); it != faults_.end()) {
      for (double& v : g.data()) v *= it->second;
    }
    DenseMatrix& slot = adjoints_[target];
    if (slot.empty()) {
      slot = std::move(g);
    } else {
      axpy(1.0, g, slot);
    }
  }

  void propagate(std::size_t id) {
    const Node& n = nodes_[id];
    const DenseMatrix& g = adjoints_[id];
    const DenseMatrix* a = n.a != npos ? &nodes_[n.a].value : nullptr;
    const DenseMatrix* b = n.b != npos ? &nodes_[n.b].value : nullptr;
    const bool need_a = n.a != npos && nodes_[n.a].requires_grad;
    const bool need_b = n.b != npos && nodes_[n.b].requires_grad;
    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant:
        return;
      case Op::MatMul:
        if (need_a) accumulate(n.a, mtgrl::matmul_nt(g, *b), n.op);
        if (need_b) accumulate(n.b, mtgrl::matmul_tn(*a, g), n.op);
        return;
      case Op::MatMulNT:
        if (need_a) accumulate(n.a, mtgrl::matmul(g, *b), n.op);
        if (need_b) accumulate(n.b, mtgrl::matmul_tn(g, *a), n.op);
        return;
      case Op::MatMulTN:
        if (need_a) accumulate(n.a, mtgrl::matmul_nt(*b, g), n.op);
        if (need_b) accumulate(n.b, mtgrl::matmul(*a, g), n.op);
        return;
      case Op::SpMM:
        if (need_a) accumulate(n.a, n.sparse->multiply_transposed(g), n.op);
        return;
      case Op::Add:
      case Op::Sub:
        if (need_a) accumulate(n.a, g, n.op);
        if (need_b) {
          DenseMatrix gb = reduce_to(g, *b);
          if (n.op == Op::Sub)
            for (double& v : gb.data()) v = -v;
          accumulate(n.b, std::move(gb), n.op);
        }
        return;
      case Op::Hadamard: {
        if (need_a) {
          DenseMatrix ga = g;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= (*b)[i];
          accumulate(n.a, std::move(ga), n.op);
        }
        if (need_b) {
          DenseMatrix gb = g;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= (*a)[i];
          accumulate(n.b, std::move(gb), n.op);
        }
        return;
      }
      case Op::MulConst: {
        DenseMatrix ga = g;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= (*n.constant)[i];
        accumulate(n.a, std::move(ga), n.op);
        return;
      }
      default:
        break;
    }

    // Remaining primitives are unary in `a`.
    DenseMatrix ga(a->rows(), a->cols());
    const DenseMatrix& y = n.value;
    switch (n.op) {
      case Op::Scale:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = n.scalar * g[i];
        break;
      case Op::AddScalar:
        ga = g;
        break;
      case Op::PReLU:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * ((*a)[i] > 0.0 ? 1.0 : n.scalar);
        break;
      case Op::Sigmoid:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * y[i] * (1.0 - y[i]);
        break;
      case Op::Softplus:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * sigmoid_value((*a)[i]);
        break;
      case Op::Log:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] / (*a)[i];
        break;
      case Op::Exp:
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * y[i];
        break;
      case Op::GatherRows:
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          auto dst = ga.row(n.indices[r]);
          auto src = g.row(r);
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
        break;
      case Op::MeanRows: {
        const double inv = 1.0 / static_cast<double>(a->rows());
        for (std::size_t i = 0; i < a->rows(); ++i)
          for (std::size_t j = 0; j < a->cols(); ++j) ga(i, j) = g(0, j) * inv;
        break;
      }
      case Op::RepeatRows:
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(0, j) += g(i, j);
        break;
      case Op::RowL2Normalize:
        for (std::size_t i = 0; i < a->rows(); ++i) {
          const double norm = n.aux(i, 0);
          auto dy = g.row(i);
          auto out = ga.row(i);
          if (norm > n.scalar) {
            const double proj = dot(y.row(i), dy);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = (dy[j] - y(i, j) * proj) / norm;
          } else {
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = dy[j] / n.scalar;
          }
        }
        break;
      case Op::ColStandardize: {
        const double rows = static_cast<double>(a->rows());
        for (std::size_t j = 0; j < a->cols(); ++j) {
          double mean_g = 0.0;
          double mean_gz = 0.0;
          for (std::size_t i = 0; i < a->rows(); ++i) {
            mean_g += g(i, j);
            mean_gz += g(i, j) * y(i, j);
          }
          mean_g /= rows;
          mean_gz /= rows;
          const double sd = n.aux(0, j);
          for (std::size_t i = 0; i < a->rows(); ++i)
            ga(i, j) = (g(i, j) - mean_g - y(i, j) * mean_gz) / sd;
        }
        break;
      }
      case Op::FrobeniusNorm: {
        const double norm = y[0];
        if (norm > 0.0)
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[0] * (*a)[i] / norm;
        break;
      }
      case Op::HConcat: {
        DenseMatrix gb(b->rows(), b->cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < a->cols(); ++j) ga(i, j) = g(i, j);
          for (std::size_t j = 0; j < b->cols(); ++j) gb(i, j) = g(i, a->cols() + j);
        }
        if (need_b) accumulate(n.b, std::move(gb), n.op);
        if (!need_a) return;
        break;
      }
      case Op::Sum:
        for (double& v : ga.data()) v = g[0];
        break;
      case Op::RowSum:
        for (std::size_t i = 0; i < ga.rows(); ++i)
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(i, 0);
        break;
      case Op::Transpose:
        ga = mtgrl::transpose(g);
        break;
      default:
        throw ContractError(std::string("backward: unhandled primitive ") + op_name(n.op));
    }
    accumulate(n.a, std::move(ga), n.op);
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  std::vector<DenseMatrix> adjoints_;
  std::optional<std::size_t> root_;
  std::map<Op, double> faults_;
};

}  // namespace mtgrl
