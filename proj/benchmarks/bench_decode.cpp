#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "sanar/corpus.hpp"
#include "sanar/decode.hpp"
#include "sanar/model.hpp"
#include "sanar/rng.hpp"
#include "sanar/training.hpp"

using namespace sanar;

namespace {

ModelConfig bench_config(std::size_t max_len) {
  ModelConfig mc;  // half the desk width so a run finishes in seconds
  mc.layers = 2;
  mc.model_width = 128;
  mc.heads = 4;
  mc.ffn_width = 512;
  mc.dropout = 0.0;
  mc.max_len_class = max_len;
  mc.max_positions = 256;
  mc.vocab_size = 1000;
  return mc;
}

std::vector<int> bench_context(std::size_t len) {
  std::vector<int> ctx = {Vocabulary::kLength};
  Rng rng = split_rng(9, 0);
  for (std::size_t i = 0; i < len; ++i)
    ctx.push_back(int(4 + rand_index(rng, 900)));
  return ctx;
}

// Zeroing every parameter makes the AR argmax constant (token 0, never EOS),
// so each decode deterministically runs to the max_len_class cap; setting the
// cap to the benchmarked length pins the AR step count exactly.
template <typename M>
void zero_params(M& m) {
  for (auto* p : m.parameters())
    for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] = 0;
}

}  // namespace

// Single-pass parallel completion: cost is one encoder pass plus one decoder
// pass regardless of the decoded length.
static void BM_ParallelDecode(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  Model<float> m(ModelKind::Nar, bench_config(64), 1);
  const std::vector<int> ctx = bench_context(60);
  const EncoderOutput<float> enc = m.encode(ctx);
  for (auto _ : state) {
    const Tensor<float> logits =
        m.decode_parallel(m.soft_copy(enc.states, n), enc.states);
    benchmark::DoNotOptimize(logits.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_ParallelDecode)->Arg(5)->Arg(10)->Arg(20);

// Full pipeline including the encoder and length prediction.
static void BM_CompleteLine(benchmark::State& state) {
  Model<float> m(ModelKind::Nar, bench_config(64), 1);
  const std::vector<int> ctx = bench_context(60);
  for (auto _ : state) {
    const DecodeResult r = complete_line(m, ctx);
    benchmark::DoNotOptimize(r.tokens.data());
  }
}
BENCHMARK(BM_CompleteLine);

// Autoregressive decoding with the step count pinned to the argument: cost
// grows with the emitted length (one decoder pass per token).
static void BM_ArDecode(benchmark::State& state) {
  const std::size_t n = std::size_t(state.range(0));
  Model<float> m(ModelKind::ArL2R, bench_config(n), 1);
  zero_params(m);
  const std::vector<int> ctx = bench_context(60);
  for (auto _ : state) {
    const DecodeResult r = complete_line_ar(m, ctx, Direction::L2R);
    benchmark::DoNotOptimize(r.tokens.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(n));
}
BENCHMARK(BM_ArDecode)->Arg(5)->Arg(10)->Arg(20);

// One two-pass glancing training step on a small packed batch.
static void BM_TrainStepParallel(benchmark::State& state) {
  Model<float> m(ModelKind::Nar, bench_config(64), 2);
  AdamState<float> opt(m.parameters());
  TrainConfig cfg;
  cfg.warmup_steps = 10;
  cfg.peak_lr = 1e-4;

  std::vector<EncodedPair> pairs(8);
  Rng rng = split_rng(10, 0);
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    pairs[e].context_ids = bench_context(60);
    const std::size_t n = 5 + rand_index(rng, 16);
    for (std::size_t j = 0; j < n; ++j)
      pairs[e].target_ids.push_back(int(4 + rand_index(rng, 900)));
    pairs[e].target_types.assign(n, SyntaxType::Identifier);
    pairs[e].true_length = int(n);
  }
  std::vector<const EncodedPair*> batch;
  for (const auto& p : pairs) batch.push_back(&p);

  std::size_t step = 0;
  for (auto _ : state) {
    const StepMetrics sm = train_step(batch, m, opt, cfg, ++step);
    benchmark::DoNotOptimize(sm.loss);
  }
}
BENCHMARK(BM_TrainStepParallel);

BENCHMARK_MAIN();
