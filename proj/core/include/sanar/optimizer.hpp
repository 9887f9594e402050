#pragma once

#include <cmath>
#include <vector>

#include "sanar/graph.hpp"
#include "sanar/tensor.hpp"

namespace sanar {

/// Per-parameter Adam moments plus the shared step counter.
template <typename S>
struct AdamState {
  explicit AdamState(const std::vector<Parameter<S>*>& params) {
    for (auto* p : params) {
      m.emplace_back(p->value.shape());
      v.emplace_back(p->value.shape());
    }
  }
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  long step = 0;
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

/// Bias-corrected Adam update over the full parameter list.  Consumes and
/// clears the accumulated gradients.
template <typename S>
void adam_step(const std::vector<Parameter<S>*>& params, AdamState<S>& state,
               S lr) {
  state.step += 1;
  const S bc1 = S(1) - std::pow(state.beta1, S(state.step));
  const S bc2 = S(1) - std::pow(state.beta2, S(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<S>& p = *params[i];
    Tensor<S>& m = state.m[i];
    Tensor<S>& v = state.v[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const S g = p.grad[j];
      m[j] = state.beta1 * m[j] + (S(1) - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (S(1) - state.beta2) * g * g;
      const S mhat = m[j] / bc1;
      const S vhat = v[j] / bc2;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
      p.grad[j] = S(0);
    }
  }
}

template <typename S>
void zero_grads(const std::vector<Parameter<S>*>& params) {
  for (auto* p : params) p->grad.fill(S(0));
}

}  // namespace sanar
