#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mtgrl/pareto.hpp"
#include "test_support.hpp"

namespace mtgrl {
namespace {

using testing::gaussian_matrix;

TaskGradientMatrix rows(std::initializer_list<std::initializer_list<double>> r) {
  return TaskGradientMatrix(DenseMatrix::from_rows(r));
}

void expect_weights(const SimplexWeights& a, std::vector<double> expected, double tol) {
  ASSERT_EQ(a.size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) EXPECT_NEAR(a[k], expected[k], tol) << k;
}

// --- two-task closed form ---------------------------------------------------------------

TEST(TwoTask, OrthogonalUnitVectors) {
  const std::vector<double> g1{1, 0}, g2{0, 1};
  expect_weights(solve_two_task(g1, g2), {0.5, 0.5}, 0.0);
}

TEST(TwoTask, DominatedGradientClampsToOneHot) {
  const std::vector<double> g1{1, 0}, g2{3, 4};
  expect_weights(solve_two_task(g1, g2), {1.0, 0.0}, 0.0);
}

TEST(TwoTask, IdenticalGradients) {
  const std::vector<double> g{2, 2};
  expect_weights(solve_two_task(g, g), {0.5, 0.5}, 0.0);
}

TEST(TwoTask, MinimisesOverAOneDimensionalScan) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = gaussian_matrix(2, 6, seed);
    const auto a = solve_two_task(g.row(0), g.row(1));
    EXPECT_TRUE(a.on_simplex());
    const TaskGradientMatrix tg(g);
    const double phi = simplex_objective(tg, a);
    for (int i = 0; i <= 1000; ++i) {
      const double t = i / 1000.0;
      EXPECT_LE(phi, simplex_objective(tg, {{t, 1.0 - t}}) + 1e-12);
    }
  }
}

// --- Frank-Wolfe ----------------------------------------------------------------------------

TEST(FrankWolfe, SingleTaskIsTrivial) {
  const auto s = frank_wolfe_min_norm(rows({{3, 4}}));
  expect_weights(s.alpha, {1.0}, 0.0);
  EXPECT_EQ(s.trace.count(), 0u);
  EXPECT_EQ(s.trace.termination, Termination::Trivial);
}

TEST(FrankWolfe, NoTasksIsAContractError) {
  EXPECT_THROW(frank_wolfe_min_norm(TaskGradientMatrix(DenseMatrix(0, 3))), ContractError);
}

TEST(FrankWolfe, ThreeTaskExampleConvergesToTheEdgeMidpoint) {
  const auto g = rows({{1, 0}, {0, 1}, {1, 1}});
  const auto s = frank_wolfe_min_norm(g);
  expect_weights(s.alpha, {0.5, 0.5, 0.0}, 1e-9);
  const double oracle = simplex_objective(g, brute_force_min_norm(g, 1e-3));
  EXPECT_LE(simplex_objective(g, s.alpha) - oracle, 1e-6);
}

TEST(FrankWolfe, AgreesWithTheClosedFormForTwoTasks) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto g = gaussian_matrix(2, 1 + seed % 20, seed);
    const TaskGradientMatrix tg(g);
    const double fw = simplex_objective(tg, frank_wolfe_min_norm(tg).alpha);
    const double cf = simplex_objective(tg, solve_two_task(g.row(0), g.row(1)));
    EXPECT_NEAR(fw, cf, 1e-8) << seed;
  }
}

TEST(FrankWolfe, PhiIsNonincreasingAndWeightsStayOnTheSimplex) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto g = TaskGradientMatrix(gaussian_matrix(2 + seed % 5, 10, seed));
    FrankWolfeOptions opt;
    opt.polish = false;
    const auto s = frank_wolfe_min_norm(g, opt);
    EXPECT_TRUE(s.alpha.on_simplex(1e-12));
    double prev = s.trace.initial_phi;
    for (const auto& it : s.trace.iterations) {
      EXPECT_LE(it.phi, prev + 1e-12);
      prev = it.phi;
    }
    EXPECT_NEAR(s.phi, simplex_objective(g, s.alpha), 1e-12);
  }
}

TEST(FrankWolfe, IterationCapIsRespected) {
  const auto g = TaskGradientMatrix(gaussian_matrix(5, 6, 3));
  const auto s = frank_wolfe_min_norm(g, 3, 1e-12);
  EXPECT_LE(s.trace.count(), 3u);
  EXPECT_THROW(frank_wolfe_min_norm(g, 0, 1e-5), ContractError);
  EXPECT_THROW(frank_wolfe_min_norm(g, 10, 0.0), ContractError);
}

TEST(FrankWolfe, InvariantToTaskPermutation) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto g = gaussian_matrix(4, 8, seed);
    DenseMatrix reversed(4, 8);
    for (std::size_t k = 0; k < 4; ++k)
      std::copy(g.row(3 - k).begin(), g.row(3 - k).end(), reversed.row(k).begin());
    const double a = frank_wolfe_min_norm(TaskGradientMatrix(g)).phi;
    const double b = frank_wolfe_min_norm(TaskGradientMatrix(reversed)).phi;
    EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
  }
}

TEST(FrankWolfe, WeightsInvariantToGlobalScaling) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto g = gaussian_matrix(3, 8, seed);
    DenseMatrix scaled = g;
    for (double& x : scaled.data()) x *= 37.5;
    const auto a = frank_wolfe_min_norm(TaskGradientMatrix(g));
    const auto b = frank_wolfe_min_norm(TaskGradientMatrix(scaled));
    EXPECT_NEAR(b.phi, a.phi * 37.5 * 37.5, 1e-8 * std::max(1.0, b.phi));
  }
}

TEST(FrankWolfe, SatisfiesTheOptimalityConditions) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto g = TaskGradientMatrix(gaussian_matrix(2 + seed % 4, 5 + seed % 46, seed));
    const auto s = frank_wolfe_min_norm(g);
    EXPECT_LE(saddle_point_residual(g, s.alpha), 1e-6 * std::max(1.0, s.phi)) << seed;
  }
}

TEST(FrankWolfe, NormalizedModeSolvesTheUnitRowProblem) {
  const auto g = rows({{10, 0}, {0, 1}});
  FrankWolfeOptions opt;
  opt.normalize_gradients = true;
  const auto s = frank_wolfe_min_norm(g, opt);
  expect_weights(s.alpha, {0.5, 0.5}, 1e-9);
  expect_weights(frank_wolfe_min_norm(g).alpha, {1.0 / 101.0, 100.0 / 101.0}, 1e-9);
}

TEST(FrankWolfe, ZeroGradientStopsImmediately) {
  const auto s = frank_wolfe_min_norm(rows({{0, 0}, {1, 1}}));
  EXPECT_NEAR(s.phi, 0.0, 1e-15);
  expect_weights(s.alpha, {1.0, 0.0}, 1e-12);
}

// --- combined direction -----------------------------------------------------------------------

TEST(CombinedDirection, OneHotAndUniform) {
  const auto g = rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(combined_direction(g, SimplexWeights::one_hot(2, 1)).data, (std::vector<double>{4, 5, 6}));
  const auto same = rows({{1, -2}, {1, -2}, {1, -2}});
  const auto d = combined_direction(same, SimplexWeights::uniform(3));
  EXPECT_NEAR(d.data[0], 1.0, 1e-15);
  EXPECT_NEAR(d.data[1], -2.0, 1e-15);
  EXPECT_THROW(combined_direction(g, SimplexWeights::uniform(3)), DimensionError);
}

// --- lattice oracle -------------------------------------------------------------------------------

double naive_lattice_min(const TaskGradientMatrix& g, int steps) {
  const std::size_t k = g.tasks();
  std::vector<double> alpha(k);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == k) {
      alpha[i] = static_cast<double>(left) / steps;
      best = std::min(best, simplex_objective(g, {alpha}));
      return;
    }
    for (int u = 0; u <= left; ++u) {
      alpha[i] = static_cast<double>(u) / steps;
      rec(i + 1, left - u);
    }
  };
  rec(0, steps);
  return best;
}

TEST(BruteForce, SpecExamples) {
  expect_weights(brute_force_min_norm(rows({{1, 0}, {0, 1}}), 1e-3), {0.5, 0.5}, 1e-12);
  expect_weights(brute_force_min_norm(rows({{1, 0}, {0, 1}, {1, 1}}), 1e-3), {0.5, 0.5, 0.0}, 1e-12);
  expect_weights(brute_force_min_norm(rows({{1, 0}, {3, 4}}), 1e-3), {1.0, 0.0}, 1e-12);
  expect_weights(brute_force_min_norm(rows({{5, 5}}), 1e-3), {1.0}, 0.0);
}

TEST(BruteForce, MatchesFullEnumeration) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto g = TaskGradientMatrix(gaussian_matrix(2 + seed % 3, 7, seed));
    const auto a = brute_force_min_norm(g, 0.02);
    EXPECT_TRUE(a.on_simplex(1e-12));
    EXPECT_NEAR(simplex_objective(g, a), naive_lattice_min(g, 50), 1e-12) << seed;
  }
}

TEST(BruteForce, TiesGoToTheLexicographicallySmallestPoint) {
  // Identical rows: every lattice point is optimal.
  expect_weights(brute_force_min_norm(rows({{1, 1}, {1, 1}, {1, 1}}), 0.1), {0.0, 0.0, 1.0}, 0.0);
}

TEST(BruteForce, Errors) {
  const auto g5 = TaskGradientMatrix(gaussian_matrix(5, 3, 1));
  EXPECT_THROW(brute_force_min_norm(g5, 0.1), ContractError);
  EXPECT_THROW(brute_force_min_norm(rows({{1}, {2}}), 0.0), ContractError);
}

// --- residual and smoothness ------------------------------------------------------------------------

TEST(Residual, SpecExamples) {
  const auto pair = rows({{1, 0}, {0, 1}});
  EXPECT_LE(saddle_point_residual(pair, {{0.5, 0.5}}), 1e-9);
  const auto dominated = rows({{1, 0}, {3, 4}});
  EXPECT_GT(saddle_point_residual(dominated, SimplexWeights::one_hot(2, 1)), 0.0);
  EXPECT_EQ(saddle_point_residual(rows({{2, 3}}), {{1.0}}), 0.0);
}

TEST(Smoothness, LargestEigenvalueOfKnownMatrices) {
  EXPECT_NEAR(largest_eigenvalue(DenseMatrix::identity(4)), 1.0, 1e-12);
  EXPECT_NEAR(largest_eigenvalue(DenseMatrix::from_rows({{2, 1}, {1, 2}})), 3.0, 1e-10);
  // Orthonormal rows: G G^T = I, so beta = 2.
  const auto g = rows({{0.6, 0.8, 0}, {-0.8, 0.6, 0}});
  const auto s = frank_wolfe_min_norm(g);
  EXPECT_NEAR(smoothness_and_gap(g, s.trace, s.phi).beta, 2.0, 1e-10);
}

TEST(Smoothness, GapBoundHoldsOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto g = TaskGradientMatrix(gaussian_matrix(2 + seed % 3, 5 + seed % 40, seed));
    FrankWolfeOptions opt;
    opt.polish = false;
    const auto s = frank_wolfe_min_norm(g, opt);
    const auto r = smoothness_and_gap(g, s.trace, s.phi);
    EXPECT_EQ(r.violations, 0u) << seed;
    EXPECT_EQ(r.delta.size(), s.trace.count());
  }
}

}  // namespace
}  // namespace mtgrl
