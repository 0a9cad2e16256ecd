#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mtgrl/error.hpp"
#include "mtgrl/numcore/tape.hpp"

namespace mtgrl {

/// Compares the tape's analytic gradient for `parameter` with central finite
/// differences. Returns max |analytic - numeric| / max(1, |numeric|).
/// The parameter is restored and the tape re-evaluated before returning.
inline double finite_diff_check(Tape& tape, const std::string& parameter, double h = 1e-5) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: step must be positive");
  const DenseMatrix original = tape.leaf_value(parameter);
  tape.forward_eval();
  const DenseMatrix analytic = tape.backward({parameter}).at(parameter);

  double worst = 0.0;
  DenseMatrix probe = original;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = original[i] + h;
    const double plus = tape.forward_eval({{parameter, probe}}).item();
    probe[i] = original[i] - h;
    const double minus = tape.forward_eval({{parameter, probe}}).item();
    probe[i] = original[i];
    const double numeric = (plus - minus) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  tape.forward_eval({{parameter, original}});
  return worst;
}

/// finite_diff_check over every parameter leaf; returns the worst error.
inline double finite_diff_check_all(Tape& tape, double h = 1e-5) {
  double worst = 0.0;
  for (const auto& name : tape.parameter_names())
    worst = std::max(worst, finite_diff_check(tape, name, h));
  return worst;
}

}  // namespace mtgrl
