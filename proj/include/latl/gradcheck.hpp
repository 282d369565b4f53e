#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "latl/error.hpp"
#include "latl/optim.hpp"
#include "latl/tensor.hpp"

namespace latl {

// Central-difference gradient oracle. Runs f once under a fresh tape to get
// analytic gradients, then perturbs every parameter coordinate by +-step and
// compares (f+ - f-)/(2*step) against them. Returns the maximum relative
// error |a-b| / max(1, |a|, |b|). Double precision only: in 32-bit the
// differences drown in rounding noise.
inline double finite_difference_check(const std::function<Tensor<double>()>& f,
                                      std::vector<Tensor<double>>& params, double step) {
  if (step == 0.0) fail("finite_difference_check: step must be nonzero");

  zero_grads(params);
  std::vector<std::vector<double>> analytic;
  {
    GradGraph<double> graph;
    Tensor<double> loss = f();
    if (!std::isfinite(loss.value())) fail("finite_difference_check: non-finite loss");
    graph.backward(loss);
  }
  for (auto& p : params) analytic.push_back(p.grad());

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const double f_plus = f().value();
      vals[i] = saved - step;
      const double f_minus = f().value();
      vals[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
        fail("finite_difference_check: non-finite loss under perturbation");
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace latl
