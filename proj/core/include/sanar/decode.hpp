#pragma once

#include <cstdint>
#include <vector>

#include "sanar/corpus.hpp"
#include "sanar/metrics.hpp"
#include "sanar/model.hpp"

namespace sanar {

/// One completed line.  `latency_ns` is the wall-clock duration of the whole
/// decode call (monotonic clock), floored at 1 ns so it is always positive.
struct DecodeResult {
  std::size_t predicted_length = 0;
  std::vector<int> tokens;  // |tokens| == predicted_length
  std::int64_t latency_ns = 0;
};

/// Single-pass parallel completion: predict the length from the length head,
/// soft-copy the encoder states to that many decoder slots, decode once with
/// no glances, take the per-position argmax (ties to the lowest id).
/// Performs exactly one encoder pass and one decoder pass.
DecodeResult complete_line(const Model<float>& model,
                           const std::vector<int>& context_ids);

/// Greedy autoregressive completion: one decoder pass per emitted token,
/// stopping at EOS or after max_len_class tokens.  EOS is skipped at the
/// first step so every completion has at least one token.  For the
/// right-to-left model the emitted sequence is reversed back to left-to-right
/// order before returning.
DecodeResult complete_line_ar(const Model<float>& model,
                              const std::vector<int>& context_ids,
                              Direction direction);

/// Decodes with whichever strategy matches the model kind.
DecodeResult complete_any(const Model<float>& model,
                          const std::vector<int>& context_ids);

/// Per-example wall-clock decode times, no batching, single-threaded.
struct LatencyStats {
  std::size_t examples = 0;
  double mean_latency_ns = 0.0;
  std::vector<double> per_example_ns;  // aligned with the filtered test order
};

/// Times one full decode per test example after `warmup` untimed decodes of
/// the first example.  Examples with true_length < min_target_len are
/// excluded; throws EmptyTestSet when nothing survives the filter.
LatencyStats latency_bench(const Model<float>& model,
                           const std::vector<EncodedPair>& test,
                           std::size_t min_target_len = 0,
                           std::size_t warmup = 10);

/// Decodes every test pair and fills the quality metrics (EM, BLEU, ES,
/// repetition ratio) plus the mean decode latency.  speedup_vs_ar is left 0;
/// it is a cross-model ratio computed by the caller from two latency runs.
EvalReport evaluate(const Model<float>& model,
                    const std::vector<EncodedPair>& test,
                    const Vocabulary& vocab);

}  // namespace sanar
