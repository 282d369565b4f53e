#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "latl/error.hpp"
#include "latl/tensor.hpp"

namespace latl {

template <typename Real>
void zero_grads(std::vector<Tensor<Real>>& params) {
  for (auto& p : params) p.zero_grad();
}

// Scales all gradients by max_norm / ||g|| when the global L2 norm exceeds
// max_norm. Returns the applied factor (1 when nothing was clipped).
template <typename Real>
Real clip_grad_norm(std::vector<Tensor<Real>>& params, Real max_norm) {
  if (!(max_norm > Real(0))) fail("clip_grad_norm: max_norm must be positive");
  double sq = 0;
  for (auto& p : params)
    for (Real g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm <= static_cast<double>(max_norm)) return Real(1);
  const Real factor = static_cast<Real>(static_cast<double>(max_norm) / norm);
  for (auto& p : params)
    for (auto& g : p.grad_mut()) g *= factor;
  return factor;
}

template <typename Real>
void sgd_step(std::vector<Tensor<Real>>& params, Real lr) {
  for (auto& p : params) {
    const auto& g = p.grad();
    auto& v = p.values_mut();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

// Per-parameter first/second moment state with bias correction.
template <typename Real>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;

  void ensure(const std::vector<Tensor<Real>>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.numel(), Real(0));
      v.emplace_back(p.numel(), Real(0));
    }
  }
};

template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, AdamState<Real>& state, Real lr) {
  state.ensure(params);
  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& g = params[pi].grad();
    auto& val = params[pi].values_mut();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = static_cast<Real>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<Real>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      val[i] -= static_cast<Real>(static_cast<double>(lr) * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace latl
