#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "mtgrl/numcore/dense_matrix.hpp"
#include "mtgrl/numcore/gradcheck.hpp"
#include "mtgrl/numcore/sparse_adjacency.hpp"
#include "mtgrl/numcore/tape.hpp"
#include "test_support.hpp"

namespace mtgrl {
namespace {

using testing::random_matrix;

TEST(DenseMatrix, RejectsDataOfWrongLength) {
  EXPECT_THROW(DenseMatrix(2, 3, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(DenseMatrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(DenseMatrix, MatmulMatchesHandComputation) {
  const auto a = DenseMatrix::from_rows({{1, 2}, {3, 4}});
  const auto b = DenseMatrix::from_rows({{5, 6}, {7, 8}});
  EXPECT_EQ(matmul(a, b), DenseMatrix::from_rows({{19, 22}, {43, 50}}));
  EXPECT_THROW(matmul(a, DenseMatrix(3, 1)), DimensionError);
}

TEST(DenseMatrix, TransposedProductsAgreeWithExplicitTranspose) {
  const auto a = random_matrix(4, 3, 1);
  const auto b = random_matrix(4, 5, 2);
  const auto c = random_matrix(6, 3, 3);
  const auto tn = matmul_tn(a, b);
  const auto ref_tn = matmul(transpose(a), b);
  const auto nt = matmul_nt(a, c);
  const auto ref_nt = matmul(a, transpose(c));
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref_tn[i], 1e-14);
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], ref_nt[i], 1e-14);
}

TEST(DenseMatrix, ItemRequiresScalar) {
  EXPECT_DOUBLE_EQ(DenseMatrix::scalar(3.5).item(), 3.5);
  EXPECT_THROW(DenseMatrix(1, 2).item(), DimensionError);
}

TEST(SparseAdjacency, RejectsSelfLoopsAndOutOfRangeEdges) {
  const std::vector<Edge> loop{{1, 1}};
  const std::vector<Edge> far{{0, 5}};
  const std::vector<Edge> twice{{0, 1}, {0, 1}};
  EXPECT_THROW(SparseAdjacency::from_undirected_edges(3, loop), ContractError);
  EXPECT_THROW(SparseAdjacency::from_undirected_edges(3, far), ContractError);
  EXPECT_THROW(SparseAdjacency::from_undirected_edges(3, twice), ContractError);
}

TEST(SparseAdjacency, ConstructorValidatesStructure) {
  EXPECT_THROW(SparseAdjacency(2, {0, 1}, {1}, {1.0}), ContractError);           // offsets size
  EXPECT_THROW(SparseAdjacency(2, {0, 1, 1}, {2}, {1.0}), ContractError);        // column range
  EXPECT_THROW(SparseAdjacency(2, {0, 2, 2}, {1, 1}, {1, 1}), ContractError);    // duplicate
  EXPECT_THROW(SparseAdjacency(2, {0, 1, 1}, {1}, {1.0}, true), ContractError);  // asymmetric
  EXPECT_NO_THROW(SparseAdjacency(2, {0, 1, 2}, {1, 0}, {1.0, 1.0}, true));
}

TEST(SparseAdjacency, EdgeQueriesAndListing) {
  const std::vector<Edge> edges{{0, 2}, {1, 2}, {2, 3}};
  const auto a = SparseAdjacency::from_undirected_edges(4, edges);
  EXPECT_TRUE(a.has_edge(2, 0));
  EXPECT_FALSE(a.has_edge(0, 1));
  EXPECT_EQ(a.degree(2), 3u);
  EXPECT_EQ(a.edges(), edges);
  EXPECT_EQ(a.num_undirected_edges(), 3u);
}

TEST(SparseAdjacency, SparseProductEqualsDenseProduct) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t n = 50 + 30 * seed;
    Rng rng = make_stream({seed, 11});
    std::bernoulli_distribution coin(0.05);
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (coin(rng)) edges.emplace_back(u, v);
    const auto a = SparseAdjacency::from_undirected_edges(n, edges).sym_normalized_with_self_loops();
    const auto b = random_matrix(n, 7, seed);
    const auto sparse = a.multiply(b);
    const auto dense = matmul(a.to_dense(), b);
    const auto sparse_t = a.multiply_transposed(b);
    const auto dense_t = matmul(transpose(a.to_dense()), b);
    for (std::size_t i = 0; i < sparse.size(); ++i) {
      EXPECT_NEAR(sparse[i], dense[i], 1e-12);
      EXPECT_NEAR(sparse_t[i], dense_t[i], 1e-12);
    }
  }
}

TEST(SparseAdjacency, SymNormOnRegularGraphAveragesNeighbours) {
  // Cycle of 6: degree 2, so with self-loops every nonzero is 1/3.
  const auto edges = testing::cycle_edges(6);
  const auto p = SparseAdjacency::from_undirected_edges(6, edges).sym_normalized_with_self_loops();
  const auto d = p.to_dense();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const bool linked = i == j || (i + 1) % 6 == j || (j + 1) % 6 == i;
      EXPECT_NEAR(d(i, j), linked ? 1.0 / 3.0 : 0.0, 1e-15);
    }
  }
}

TEST(SparseAdjacency, SymNormOfIsolatedNodeIsOne) {
  const auto p = SparseAdjacency::from_undirected_edges(1, {}).sym_normalized_with_self_loops();
  EXPECT_DOUBLE_EQ(p.to_dense()(0, 0), 1.0);
}

// --- tape: hand examples ---------------------------------------------------------

TEST(Tape, DotProductExample) {
  Tape t;
  const Var x = t.input("x", DenseMatrix::row_vector({1, 2}));
  const Var y = t.input("y", DenseMatrix::column_vector({3, 4}));
  t.matmul(x, y);
  EXPECT_DOUBLE_EQ(t.forward_eval().item(), 11.0);
}

TEST(Tape, PReLUExample) {
  Tape t;
  t.prelu(t.input("z", DenseMatrix::row_vector({-4, 2})), 0.25);
  EXPECT_EQ(t.forward_eval(), DenseMatrix::row_vector({-1, 2}));
}

TEST(Tape, SigmoidOfZeroIsHalf) {
  Tape t;
  t.sigmoid(t.input("z", DenseMatrix::scalar(0.0)));
  EXPECT_DOUBLE_EQ(t.forward_eval().item(), 0.5);
}

TEST(Tape, QuadraticGradient) {
  Tape t;
  const Var x = t.parameter("x", DenseMatrix::column_vector({1, 2, 3}));
  t.matmul_tn(x, x);
  const auto g = t.backward().at("x");
  EXPECT_EQ(g, DenseMatrix::column_vector({2, 4, 6}));
}

TEST(Tape, SigmoidGradientAtZero) {
  Tape t;
  t.sum(t.sigmoid(t.parameter("x", DenseMatrix::row_vector({0.0}))));
  EXPECT_DOUBLE_EQ(t.backward().at("x")(0, 0), 0.25);
}

TEST(Tape, UntouchedParameterGetsZeroGradient) {
  Tape t;
  const Var a = t.parameter("a", DenseMatrix::scalar(2.0));
  t.parameter("unused", DenseMatrix(2, 3, 1.0));
  t.set_root(t.scale(a, 3.0));
  const auto g = t.backward();
  EXPECT_EQ(g.at("unused"), DenseMatrix(2, 3, 0.0));
  EXPECT_DOUBLE_EQ(g.at("a").item(), 3.0);
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape t;
  t.scale(t.parameter("a", DenseMatrix(2, 2, 1.0)), 2.0);
  EXPECT_THROW(t.backward(), ContractError);
}

TEST(Tape, ForwardEvalRejectsShapeChange) {
  Tape t;
  const Var x = t.input("x", DenseMatrix(2, 3, 1.0));
  t.sum(x);
  EXPECT_THROW(t.forward_eval({{"x", DenseMatrix(3, 2, 1.0)}}), DimensionError);
}

TEST(Tape, NonFiniteValueNamesThePrimitive) {
  Tape t;
  try {
    t.log(t.input("x", DenseMatrix::scalar(-1.0)));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
  }
}

TEST(Tape, StableActivationsAtExtremeInputs) {
  Tape t;
  const Var z = t.input("z", DenseMatrix::row_vector({-1000.0, 1000.0}));
  const auto s = t.value(t.sigmoid(z));
  const auto sp = t.value(t.softplus(z));
  EXPECT_DOUBLE_EQ(s(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(sp(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(sp(0, 1), 1000.0);
}

TEST(Tape, ReplayIsBitIdentical) {
  Tape t;
  const Var w = t.parameter("w", random_matrix(4, 3, 5));
  const Var x = t.input("x", random_matrix(6, 4, 6));
  t.sum(t.exp(t.scale(t.row_l2_normalize(t.matmul(x, w)), 0.3)));
  const double first = t.forward_eval().item();
  const auto g1 = t.backward();
  const double second = t.forward_eval().item();
  const auto g2 = t.backward();
  EXPECT_EQ(first, second);
  EXPECT_EQ(g1, g2);
}

TEST(Tape, BroadcastAddAcceptsRowColumnAndScalar) {
  Tape t;
  const Var m = t.parameter("m", random_matrix(3, 4, 1));
  const Var r = t.parameter("r", random_matrix(1, 4, 2));
  const Var c = t.parameter("c", random_matrix(3, 1, 3));
  const Var s = t.parameter("s", random_matrix(1, 1, 4));
  const Var sum = t.add(t.sub(t.add(m, r), c), s);
  EXPECT_EQ(t.value(sum).rows(), 3u);
  EXPECT_EQ(t.value(sum).cols(), 4u);
  t.sum(t.hadamard(sum, t.constant(random_matrix(3, 4, 5))));
  EXPECT_LT(finite_diff_check_all(t), 1e-8);
}

// --- tape: every primitive against central differences ---------------------------

struct PrimitiveCase {
  std::string name;
  std::function<Var(Tape&, std::uint64_t)> build;  // returns a matrix-valued node
};

std::vector<PrimitiveCase> primitive_cases() {
  auto p = [](Tape& t, const char* n, std::size_t r, std::size_t c, std::uint64_t s) {
    return t.parameter(n, random_matrix(r, c, s));
  };
  auto adjacency = [](std::uint64_t s) {
    Rng rng = make_stream({s, 3});
    std::bernoulli_distribution coin(0.4);
    std::vector<Edge> e;
    for (std::size_t u = 0; u < 5; ++u)
      for (std::size_t v = u + 1; v < 5; ++v)
        if (coin(rng)) e.emplace_back(u, v);
    return std::make_shared<const SparseAdjacency>(
        SparseAdjacency::from_undirected_edges(5, e).sym_normalized_with_self_loops());
  };
  return {
      {"matmul", [=](Tape& t, auto s) { return t.matmul(p(t, "a", 3, 4, s), p(t, "b", 4, 2, s + 1)); }},
      {"matmul_nt",
       [=](Tape& t, auto s) { return t.matmul_nt(p(t, "a", 3, 4, s), p(t, "b", 2, 4, s + 1)); }},
      {"matmul_tn",
       [=](Tape& t, auto s) { return t.matmul_tn(p(t, "a", 4, 3, s), p(t, "b", 4, 2, s + 1)); }},
      {"spmm", [=](Tape& t, auto s) { return t.spmm(adjacency(s), p(t, "a", 5, 3, s)); }},
      {"add", [=](Tape& t, auto s) { return t.add(p(t, "a", 3, 2, s), p(t, "b", 3, 2, s + 1)); }},
      {"sub", [=](Tape& t, auto s) { return t.sub(p(t, "a", 3, 2, s), p(t, "b", 1, 2, s + 1)); }},
      {"hadamard",
       [=](Tape& t, auto s) { return t.hadamard(p(t, "a", 3, 2, s), p(t, "b", 3, 2, s + 1)); }},
      {"mul_const",
       [=](Tape& t, auto s) { return t.mul_const(p(t, "a", 3, 2, s), random_matrix(3, 2, s + 9)); }},
      {"scale", [=](Tape& t, auto s) { return t.scale(p(t, "a", 3, 2, s), -1.7); }},
      {"add_scalar", [=](Tape& t, auto s) { return t.add_scalar(p(t, "a", 3, 2, s), 0.4); }},
      {"prelu", [=](Tape& t, auto s) { return t.prelu(p(t, "a", 4, 3, s), 0.25); }},
      {"sigmoid", [=](Tape& t, auto s) { return t.sigmoid(p(t, "a", 3, 3, s)); }},
      {"softplus", [=](Tape& t, auto s) { return t.softplus(p(t, "a", 3, 3, s)); }},
      {"log",
       [=](Tape& t, auto s) {
         return t.log(t.parameter("a", random_matrix(3, 3, s, 0.5, 2.0)));
       }},
      {"exp", [=](Tape& t, auto s) { return t.exp(p(t, "a", 3, 3, s)); }},
      {"gather_rows",
       [=](Tape& t, auto s) { return t.gather_rows(p(t, "a", 4, 3, s), {3, 0, 3, 1}); }},
      {"mean_rows", [=](Tape& t, auto s) { return t.mean_rows(p(t, "a", 4, 3, s)); }},
      {"repeat_rows", [=](Tape& t, auto s) { return t.repeat_rows(p(t, "a", 1, 3, s), 4); }},
      {"row_l2_normalize", [=](Tape& t, auto s) { return t.row_l2_normalize(p(t, "a", 4, 3, s)); }},
      {"col_standardize", [=](Tape& t, auto s) { return t.col_standardize(p(t, "a", 5, 3, s)); }},
      {"frobenius_norm", [=](Tape& t, auto s) { return t.frobenius_norm(p(t, "a", 4, 3, s)); }},
      {"hconcat",
       [=](Tape& t, auto s) { return t.hconcat(p(t, "a", 3, 2, s), p(t, "b", 3, 4, s + 1)); }},
      {"sum", [=](Tape& t, auto s) { return t.sum(p(t, "a", 3, 2, s)); }},
      {"row_sum", [=](Tape& t, auto s) { return t.row_sum(p(t, "a", 3, 4, s)); }},
      {"transpose", [=](Tape& t, auto s) { return t.transpose(p(t, "a", 3, 4, s)); }},
  };
}

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape t;
    const Var out = GetParam().build(t, seed * 17 + 1);
    const auto& v = t.value(out);
    // A random projection gives every output entry a distinct upstream weight.
    t.sum(t.mul_const(out, random_matrix(v.rows(), v.cols(), seed + 1000)));
    EXPECT_LT(finite_diff_check_all(t), 1e-4) << GetParam().name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient, ::testing::ValuesIn(primitive_cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Tape, ThreeLayerTapeMatchesCentralDifferences) {
  Tape t;
  const Var x = t.input("x", random_matrix(6, 4, 1));
  Var h = x;
  for (int l = 0; l < 3; ++l) {
    const Var w = t.parameter("W" + std::to_string(l), random_matrix(4, 4, 10 + l, -0.8, 0.8));
    h = t.sigmoid(t.matmul(h, w));
  }
  t.frobenius_norm(h);
  EXPECT_LT(finite_diff_check_all(t), 1e-4);
}

TEST(Gradcheck, LinearTapeIsExact) {
  Tape t;
  const Var w = t.parameter("w", random_matrix(5, 1, 3));
  t.matmul_tn(w, t.input("x", random_matrix(5, 1, 4)));
  EXPECT_LT(finite_diff_check(t, "w"), 1e-10);
}

TEST(Gradcheck, RestoresTheParameter) {
  Tape t;
  const auto w0 = random_matrix(3, 3, 8);
  t.sum(t.exp(t.parameter("w", w0)));
  const double before = t.forward_eval().item();
  finite_diff_check(t, "w");
  EXPECT_EQ(t.leaf_value("w"), w0);
  EXPECT_EQ(t.forward_eval().item(), before);
}

TEST(Gradcheck, DetectsACorruptedAdjoint) {
  Tape t;
  const Var w = t.parameter("w", random_matrix(4, 3, 1));
  t.sum(t.sigmoid(t.matmul(t.input("x", random_matrix(5, 4, 2)), w)));
  t.inject_adjoint_fault(Op::MatMul, 1.5);
  EXPECT_GT(finite_diff_check_all(t), 1e-2);
}

}  // namespace
}  // namespace mtgrl
