#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ccaug/tensor.hpp"

namespace ccaug {

// Central-difference comparison for reverse-mode gradients.
//
// `build` must construct the scalar output from scratch on the given tape
// (so each perturbed evaluation replays the full forward pass). Returns
// max_i |analytic_i - numeric_i| / max(1, |numeric_i|) over all entries of
// all `params`. Intended for double instantiations; float loses too many
// digits to the difference quotient for tight thresholds.
template <typename T>
struct GradCheckResult {
  T max_rel_error = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  T analytic = 0;
  T numeric = 0;
};

template <typename T>
GradCheckResult<T> grad_check(
    const std::function<TensorT<T>(TapeT<T>&)>& build,
    const std::vector<TensorT<T>>& params, T step) {
  // Analytic pass.
  std::vector<std::vector<T>> analytic;
  {
    TapeT<T> tape;
    for (auto p : params) p.zero_grad();
    TensorT<T> out = build(tape);
    tape.backward(out);
    for (const auto& p : params)
      analytic.emplace_back(p.grad_values().begin(), p.grad_values().end());
  }

  GradCheckResult<T> result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    TensorT<T> p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T saved = p.data()[i];
      p.data()[i] = saved + step;
      T f_plus;
      {
        TapeT<T> tape;
        f_plus = build(tape).item();
      }
      p.data()[i] = saved - step;
      T f_minus;
      {
        TapeT<T> tape;
        f_minus = build(tape).item();
      }
      p.data()[i] = saved;
      const T numeric = (f_plus - f_minus) / (2 * step);
      const T a = analytic[pi][i];
      const T rel = std::abs(a - numeric) / std::max(T(1), std::abs(numeric));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace ccaug
