#pragma once

#include <cmath>

#include "sanar/rng.hpp"
#include "sanar/tensor.hpp"

namespace sanar {

/// Xavier-uniform init for a [fan_in, fan_out] weight matrix.
template <typename S>
Tensor<S> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor<S> t({fan_in, fan_out});
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = S(dist(rng));
  return t;
}

/// N(0, 1/sqrt(dim)) init for embedding tables ([rows, dim]).
template <typename S>
Tensor<S> normal_embedding(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor<S> t({rows, dim});
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(dim)));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = S(dist(rng));
  return t;
}

template <typename S>
Tensor<S> zeros_vec(std::size_t n) {
  return Tensor<S>({n});
}

template <typename S>
Tensor<S> ones_vec(std::size_t n) {
  Tensor<S> t({n});
  t.fill(S(1));
  return t;
}

}  // namespace sanar
