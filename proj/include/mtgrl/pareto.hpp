#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mtgrl/encoder.hpp"
#include "mtgrl/error.hpp"
#include "mtgrl/numcore/dense_matrix.hpp"

namespace mtgrl {

/// K stacked task gradients over P shared parameters.
class TaskGradientMatrix {
 public:
  TaskGradientMatrix() = default;

  explicit TaskGradientMatrix(DenseMatrix rows) : g_(std::move(rows)) { validate(); }

  static TaskGradientMatrix from_rows(const std::vector<FlatGradient>& rows) {
    if (rows.empty()) return TaskGradientMatrix(DenseMatrix());
    const std::size_t p = rows.front().size();
    DenseMatrix g(rows.size(), p);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != p) {
        throw DimensionError("task gradient " + std::to_string(k) + " has length " +
                             std::to_string(rows[k].size()) + ", expected " + std::to_string(p));
      }
      std::copy(rows[k].data.begin(), rows[k].data.end(), g.row(k).begin());
    }
    return TaskGradientMatrix(std::move(g));
  }

  std::size_t tasks() const noexcept { return g_.rows(); }
  std::size_t params() const noexcept { return g_.cols(); }
  std::span<const double> row(std::size_t k) const noexcept { return g_.row(k); }
  const DenseMatrix& matrix() const noexcept { return g_; }

  /// M = G G^T (K x K).
  DenseMatrix gram() const { return matmul_nt(g_, g_); }

  /// Rows scaled to unit L2 norm; zero rows stay zero.
  TaskGradientMatrix row_normalized() const {
    DenseMatrix g = g_;
    for (std::size_t k = 0; k < g.rows(); ++k) {
      const double n = std::sqrt(dot(g.row(k), g.row(k)));
      if (n > 0.0)
        for (double& x : g.row(k)) x /= n;
    }
    return TaskGradientMatrix(std::move(g));
  }

 private:
  void validate() const {
    if (!all_finite(g_)) throw NumericError("task gradient matrix has non-finite entries");
  }

  DenseMatrix g_;
};

/// Point on the probability simplex.
struct SimplexWeights {
  std::vector<double> weights;

  static SimplexWeights uniform(std::size_t k) {
    if (k == 0) throw ContractError("simplex of dimension 0");
    return {std::vector<double>(k, 1.0 / static_cast<double>(k))};
  }

  static SimplexWeights one_hot(std::size_t k, std::size_t at) {
    if (at >= k) throw ContractError("one_hot index out of range");
    SimplexWeights w{std::vector<double>(k, 0.0)};
    w.weights[at] = 1.0;
    return w;
  }

  std::size_t size() const noexcept { return weights.size(); }
  double operator[](std::size_t k) const noexcept { return weights[k]; }

  bool on_simplex(double tol = 1e-12) const noexcept {
    if (weights.empty()) return false;
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) return false;
      total += w;
    }
    return std::abs(total - 1.0) <= tol;
  }

  bool operator==(const SimplexWeights&) const = default;
};

enum class Termination { Trivial, StepBelowThreshold, IterationCap, ZeroDirection };

inline const char* termination_name(Termination t) noexcept {
  switch (t) {
    case Termination::Trivial: return "trivial";
    case Termination::StepBelowThreshold: return "step_below_threshold";
    case Termination::IterationCap: return "iteration_cap";
    case Termination::ZeroDirection: return "zero_direction";
  }
  return "?";
}

struct SolverIteration {
  std::size_t task = 0;  // vertex moved toward (or away from, for away steps)
  bool away = false;
  double eta = 0.0;
  double phi = 0.0;  // after the step
};

/// phi is nonincreasing along `iterations`.
struct SolverTrace {
  double initial_phi = 0.0;
  std::vector<SolverIteration> iterations;
  Termination termination = Termination::Trivial;
  bool polished = false;  // active-set refinement accepted after the loop

  std::size_t count() const noexcept { return iterations.size(); }
};

struct FrankWolfeOptions {
  std::size_t max_iterations = 100;  // gamma
  double step_threshold = 1e-5;      // xi
  bool away_steps = true;
  bool polish = true;
  bool normalize_gradients = false;

  void validate() const {
    if (max_iterations < 1) throw ContractError("frank-wolfe: max_iterations must be >= 1");
    if (!(step_threshold > 0.0)) throw ContractError("frank-wolfe: step threshold must be > 0");
  }
};

struct MinNormSolution {
  SimplexWeights alpha;
  SolverTrace trace;
  double phi = 0.0;  // ||alpha G||^2 on the matrix actually solved
};

namespace pareto_detail {

inline std::vector<double> gram_times(const DenseMatrix& m, const std::vector<double>& a) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), a);
  return out;
}

inline double quad(const DenseMatrix& m, const std::vector<double>& a) {
  const auto ma = gram_times(m, a);
  return dot(a, ma);
}

/// Solves A x = b by Gaussian elimination with partial pivoting. Returns false
/// when a pivot vanishes.
inline bool solve_linear(std::vector<std::vector<double>> a, std::vector<double>& b) {
  const std::size_t n = b.size();
  double scale = 0.0;
  for (const auto& r : a)
    for (double x : r) scale = std::max(scale, std::abs(x));
  const double tiny = 1e-13 * std::max(1.0, scale);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) <= tiny) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c][k] * b[k];
    b[c] = s / a[c][c];
  }
  return true;
}

/// Minimiser of a^T M a on the affine hull of the current support, accepted
/// only if it stays in the simplex and does not increase phi.
inline bool polish_on_support(const DenseMatrix& m, std::vector<double>& alpha) {
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < alpha.size(); ++k)
    if (alpha[k] > 0.0) support.push_back(k);
  const std::size_t s = support.size();
  if (s < 2) return false;
  std::vector<std::vector<double>> kkt(s + 1, std::vector<double>(s + 1, 0.0));
  std::vector<double> rhs(s + 1, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) kkt[i][j] = 2.0 * m(support[i], support[j]);
    kkt[i][s] = 1.0;
    kkt[s][i] = 1.0;
  }
  rhs[s] = 1.0;
  if (!solve_linear(std::move(kkt), rhs)) return false;
  std::vector<double> candidate(alpha.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    if (!(rhs[i] >= 0.0)) return false;
    candidate[support[i]] = rhs[i];
    total += rhs[i];
  }
  for (double& x : candidate) x /= total;
  if (quad(m, candidate) > quad(m, alpha)) return false;
  alpha = std::move(candidate);
  return true;
}

}  // namespace pareto_detail

/// Closed-form min-norm point of the segment [g1, g2]; alpha_1 is the clamped
/// minimiser g2.(g2-g1) / ||g2-g1||^2.
inline SimplexWeights solve_two_task(std::span<const double> g1, std::span<const double> g2) {
  if (g1.size() != g2.size()) throw DimensionError("solve_two_task: gradient lengths differ");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const double d = g2[i] - g1[i];
    num += g2[i] * d;
    den += d * d;
  }
  if (den == 0.0) return {{0.5, 0.5}};
  const double a1 = std::clamp(num / den, 0.0, 1.0);
  return {{a1, 1.0 - a1}};
}

inline SimplexWeights solve_two_task(const FlatGradient& g1, const FlatGradient& g2) {
  return solve_two_task(std::span<const double>(g1.data), std::span<const double>(g2.data));
}

/// Min-norm point of conv{g_1..g_K} by Frank-Wolfe from the uniform point.
/// Forward step toward t = argmin_r (alpha G).g_r (lowest index on ties) with
/// the exact line search eta = (alpha G).(alpha G - g_t) / ||alpha G - g_t||^2
/// clamped to [0,1]. With away_steps, the step may instead move away from the
/// active vertex with the largest (alpha G).g_s when that gap is larger. The
/// loop applies the step, then stops when eta < xi or after gamma iterations.
inline MinNormSolution frank_wolfe_min_norm(const TaskGradientMatrix& g,
                                            const FrankWolfeOptions& opt = {}) {
  opt.validate();
  const std::size_t k = g.tasks();
  if (k == 0) throw ContractError("frank-wolfe: no tasks");
  const DenseMatrix m = opt.normalize_gradients ? g.row_normalized().gram() : g.gram();

  MinNormSolution out;
  std::vector<double> alpha(k, 1.0 / static_cast<double>(k));
  out.trace.initial_phi = pareto_detail::quad(m, alpha);
  if (k == 1) {
    out.alpha = {alpha};
    out.phi = out.trace.initial_phi;
    out.trace.termination = Termination::Trivial;
    return out;
  }

  out.trace.termination = Termination::IterationCap;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const auto ma = pareto_detail::gram_times(m, alpha);
    const double phi = dot(alpha, ma);
    const std::size_t t =
        static_cast<std::size_t>(std::min_element(ma.begin(), ma.end()) - ma.begin());
    const double forward_gap = phi - ma[t];

    std::size_t s = k;
    std::size_t active = 0;
    for (std::size_t r = 0; r < k; ++r) {
      if (alpha[r] <= 0.0) continue;
      ++active;
      if (s == k || ma[r] > ma[s]) s = r;
    }
    const double away_gap = ma[s] - phi;

    SolverIteration step;
    if (!opt.away_steps || active == 1 || forward_gap >= away_gap) {
      const double den = phi - 2.0 * ma[t] + m(t, t);
      if (!(den > 0.0)) {
        out.trace.termination = Termination::ZeroDirection;
        break;
      }
      const double eta = std::clamp(forward_gap / den, 0.0, 1.0);
      for (double& a : alpha) a *= 1.0 - eta;
      alpha[t] += eta;
      if (eta == 1.0) {
        std::fill(alpha.begin(), alpha.end(), 0.0);
        alpha[t] = 1.0;
      }
      step = {t, false, eta, 0.0};
    } else {
      const double den = phi - 2.0 * ma[s] + m(s, s);
      if (!(den > 0.0)) {
        out.trace.termination = Termination::ZeroDirection;
        break;
      }
      const double eta_max = alpha[s] / (1.0 - alpha[s]);
      const double eta = std::clamp(away_gap / den, 0.0, eta_max);
      for (double& a : alpha) a *= 1.0 + eta;
      alpha[s] -= eta;
      if (eta == eta_max) alpha[s] = 0.0;
      step = {s, true, eta, 0.0};
    }
    step.phi = pareto_detail::quad(m, alpha);
    out.trace.iterations.push_back(step);
    if (step.eta < opt.step_threshold) {
      out.trace.termination = Termination::StepBelowThreshold;
      break;
    }
  }

  if (opt.polish) out.trace.polished = pareto_detail::polish_on_support(m, alpha);
  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  for (double& a : alpha) a = std::max(0.0, a / total);
  out.alpha = {std::move(alpha)};
  out.phi = pareto_detail::quad(m, out.alpha.weights);
  return out;
}

inline MinNormSolution frank_wolfe_min_norm(const TaskGradientMatrix& g, std::size_t gamma,
                                            double xi) {
  FrankWolfeOptions opt;
  opt.max_iterations = gamma;
  opt.step_threshold = xi;
  return frank_wolfe_min_norm(g, opt);
}

/// alpha G as a length-P vector.
inline FlatGradient combined_direction(const TaskGradientMatrix& g, const SimplexWeights& alpha) {
  if (alpha.size() != g.tasks()) {
    throw DimensionError("combined_direction: " + std::to_string(alpha.size()) +
                         " weights for " + std::to_string(g.tasks()) + " tasks");
  }
  FlatGradient d{std::vector<double>(g.params(), 0.0)};
  for (std::size_t k = 0; k < g.tasks(); ++k) {
    const auto row = g.row(k);
    for (std::size_t p = 0; p < row.size(); ++p) d.data[p] += alpha[k] * row[p];
  }
  return d;
}

/// ||sum_k alpha_k g_k||^2.
inline double simplex_objective(const TaskGradientMatrix& g, const SimplexWeights& alpha) {
  const FlatGradient d = combined_direction(g, alpha);
  return dot(d.data, d.data);
}

/// Exact minimiser of phi over the lattice {alpha : m alpha in Z^K, m = 1/resolution}.
/// The first K-2 coordinates are enumerated; on the remaining edge phi is a
/// convex quadratic in one lattice variable, minimised at floor/ceil of its
/// continuous minimiser. Ties resolve to the lexicographically smallest alpha.
inline SimplexWeights brute_force_min_norm(const TaskGradientMatrix& g, double resolution) {
  const std::size_t k = g.tasks();
  if (k == 0) throw ContractError("brute force: no tasks");
  if (k > 4) throw ContractError("brute force: K=" + std::to_string(k) + " exceeds 4");
  if (!(resolution > 0.0) || resolution > 1.0) {
    throw ContractError("brute force: resolution must lie in (0,1]");
  }
  if (k == 1) return {{1.0}};
  const long steps = std::lround(1.0 / resolution);
  if (steps < 1) throw ContractError("brute force: resolution too coarse");
  const double inv = 1.0 / static_cast<double>(steps);
  const DenseMatrix m = g.gram();
  const std::size_t a = k - 2;  // last edge uses coordinates a, a+1
  const std::size_t b = k - 1;

  std::vector<long> prefix(a, 0);
  std::vector<long> best_units;
  double best_phi = std::numeric_limits<double>::infinity();
  std::vector<double> alpha(k, 0.0);

  auto try_prefix = [&] {
    long used = 0;
    for (long v : prefix) used += v;
    const long rest = steps - used;
    for (std::size_t i = 0; i < a; ++i) alpha[i] = static_cast<double>(prefix[i]) * inv;
    // alpha_a = j/m, alpha_b = (rest - j)/m. With base = prefix + (rest/m) e_b and
    // direction e_a - e_b: phi(x) = c0 + 2 x c1 + x^2 c2, x = j/m.
    alpha[a] = 0.0;
    alpha[b] = static_cast<double>(rest) * inv;
    const auto mb = pareto_detail::gram_times(m, alpha);
    const double c1 = mb[a] - mb[b];
    const double c2 = m(a, a) - 2.0 * m(a, b) + m(b, b);
    long lo = 0;
    long hi = 0;
    if (c2 > 0.0) {
      const double x = std::clamp(-c1 / c2 * static_cast<double>(steps), 0.0,
                                  static_cast<double>(rest));
      lo = static_cast<long>(std::floor(x));
      hi = std::min(rest, lo + 1);
    } else {
      hi = c1 < 0.0 ? rest : 0;
      lo = hi;
    }
    for (long j : {lo, hi}) {
      alpha[a] = static_cast<double>(j) * inv;
      alpha[b] = static_cast<double>(rest - j) * inv;
      const double phi = pareto_detail::quad(m, alpha);
      if (phi < best_phi) {
        best_phi = phi;
        best_units = prefix;
        best_units.push_back(j);
        best_units.push_back(rest - j);
      }
    }
  };

  // Lexicographic enumeration of prefixes with sum <= steps.
  while (true) {
    try_prefix();
    std::size_t pos = a;
    while (pos > 0) {
      long used = 0;
      for (std::size_t i = 0; i < pos; ++i) used += prefix[i];
      if (used < steps) {
        ++prefix[pos - 1];
        for (std::size_t i = pos; i < a; ++i) prefix[i] = 0;
        break;
      }
      --pos;
      prefix[pos] = 0;
    }
    if (pos == 0) break;
  }

  SimplexWeights out{std::vector<double>(k)};
  for (std::size_t i = 0; i < k; ++i) out.weights[i] = static_cast<double>(best_units[i]) * inv;
  return out;
}

/// max_k (phi - (alpha G).g_k)^+ : violation of the min-norm optimality
/// condition (alpha G).g_k >= ||alpha G||^2 for all k.
inline double saddle_point_residual(const TaskGradientMatrix& g, const SimplexWeights& alpha) {
  const FlatGradient d = combined_direction(g, alpha);
  const double phi = dot(d.data, d.data);
  double worst = 0.0;
  for (std::size_t k = 0; k < g.tasks(); ++k) worst = std::max(worst, phi - dot(d.data, g.row(k)));
  return worst;
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration. Throws NumericError after max_steps without convergence.
inline double largest_eigenvalue(const DenseMatrix& m, std::size_t max_steps = 10000,
                                 double tol = 1e-13) {
  const std::size_t n = m.rows();
  if (n == 0) return 0.0;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i);
  double lambda = 0.0;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const double norm = std::sqrt(dot(v, v));
    for (double& x : v) x /= norm;
    auto w = pareto_detail::gram_times(m, v);
    const double next = dot(v, w);
    const double wn = std::sqrt(dot(w, w));
    if (wn == 0.0) return 0.0;
    if (step > 0 && std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
    lambda = next;
    v = std::move(w);
  }
  throw NumericError("power iteration did not converge in " + std::to_string(max_steps) +
                     " steps");
}

struct GapReport {
  double beta = 0.0;      // 2 lambda_max(G G^T)
  double phi_star = 0.0;  // reference optimum
  std::vector<double> delta;  // phi(alpha_i) - phi_star for iteration i = 1..
  std::vector<double> bound;  // 4 beta / (i + 1)
  std::size_t violations = 0;  // iterations i >= 2 with delta > bound
};

/// Checks delta_i <= 4 beta / (i + 1) along a solver trace. phi* comes from
/// the lattice oracle (K <= 4), taken as the smaller of that and the solver's
/// final value, or from the final value minus xi for K > 4.
inline GapReport smoothness_and_gap(const TaskGradientMatrix& g, const SolverTrace& trace,
                                    double final_phi, double resolution = 1e-3,
                                    double xi = 1e-5) {
  GapReport r;
  const DenseMatrix m = g.gram();
  r.beta = 2.0 * largest_eigenvalue(m);
  if (g.tasks() <= 4) {
    const double lattice = simplex_objective(g, brute_force_min_norm(g, resolution));
    r.phi_star = std::min(lattice, final_phi);
  } else {
    r.phi_star = final_phi - xi;
  }
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const double iteration = static_cast<double>(i + 1);
    const double delta = g.tasks() == 1 ? 0.0 : trace.iterations[i].phi - r.phi_star;
    const double bound = 4.0 * r.beta / (iteration + 1.0);
    r.delta.push_back(delta);
    r.bound.push_back(bound);
    if (i + 1 >= 2 && delta > bound) ++r.violations;
  }
  return r;
}

}  // namespace mtgrl
