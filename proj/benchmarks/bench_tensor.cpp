#include <benchmark/benchmark.h>

#include "sanar/gemm.hpp"
#include "sanar/graph.hpp"
#include "sanar/init.hpp"
#include "sanar/optimizer.hpp"
#include "sanar/rng.hpp"

using namespace sanar;

static void BM_GemmSquare(benchmark::State& state) {
  const int n = int(state.range(0));
  Rng rng = split_rng(1, 0);
  auto a = xavier_uniform<float>(n, n, rng);
  auto b = xavier_uniform<float>(n, n, rng);
  Tensor<float> c({std::size_t(n), std::size_t(n)});
  for (auto _ : state) {
    detail::gemm(false, false, n, n, n, 1.0f, a.data(), b.data(), 0.0f, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n * 2);
}
BENCHMARK(BM_GemmSquare)->Arg(64)->Arg(128)->Arg(256);

static void BM_SoftmaxRows(benchmark::State& state) {
  const std::size_t rows = std::size_t(state.range(0));
  Rng rng = split_rng(2, 0);
  auto x = xavier_uniform<float>(rows, 256, rng);
  for (auto _ : state) {
    Graph<float> g(false);
    auto y = g.softmax_rows(g.constant_view(&x));
    benchmark::DoNotOptimize(g.value(y).data());
  }
}
BENCHMARK(BM_SoftmaxRows)->Arg(32)->Arg(128);

static void BM_ForwardBackwardMlp(benchmark::State& state) {
  const std::size_t rows = 64, width = 256;
  Rng rng = split_rng(3, 0);
  Parameter<float> w1("w1", xavier_uniform<float>(width, width, rng));
  Parameter<float> w2("w2", xavier_uniform<float>(width, width, rng));
  auto x = xavier_uniform<float>(rows, width, rng);
  std::vector<int> targets(rows, 7);
  std::vector<float> mask(rows, 1.0f);
  for (auto _ : state) {
    Graph<float> g(true);
    auto h = g.relu(g.matmul(g.constant_view(&x), g.param(w1)));
    auto logits = g.matmul(h, g.param(w2));
    auto loss = g.cross_entropy_rows(logits, targets, mask);
    g.backward(loss);
    benchmark::DoNotOptimize(w1.grad.data());
    zero_grads<float>({&w1, &w2});
  }
}
BENCHMARK(BM_ForwardBackwardMlp);

BENCHMARK_MAIN();
