#include "sanar/decode.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

#include "sanar/error.hpp"

namespace sanar {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point t0) {
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      Clock::now() - t0)
                      .count();
  return ns > 0 ? ns : 1;
}

}  // namespace

DecodeResult complete_line(const Model<float>& model,
                           const std::vector<int>& context_ids) {
  const auto t0 = Clock::now();
  const auto enc = model.encode(context_ids);
  const std::size_t n = predicted_length(enc.length_logits);
  const auto h = model.soft_copy(enc.states, n);
  const auto logits = model.decode_parallel(h, enc.states);

  DecodeResult r;
  r.predicted_length = n;
  r.tokens.reserve(n);
  for (std::size_t row = 0; row < n; ++row)
    r.tokens.push_back(int(argmax_row(logits, row)));
  r.latency_ns = elapsed_ns(t0);
  return r;
}

DecodeResult complete_line_ar(const Model<float>& model,
                              const std::vector<int>& context_ids,
                              Direction direction) {
  const auto t0 = Clock::now();
  const auto enc = model.encode(context_ids);
  const std::size_t cap = model.config().max_len_class;

  std::vector<int> out;
  while (out.size() < cap) {
    const auto logits = model.decode_ar_step(out, enc.states, direction);
    int best = -1;
    float best_v = -std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < logits.numel(); ++c) {
      if (out.empty() && int(c) == Vocabulary::kEos) continue;
      if (logits[c] > best_v) {  // strict: ties stay at the lowest id
        best_v = logits[c];
        best = int(c);
      }
    }
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
  }
  if (direction == Direction::R2L) std::reverse(out.begin(), out.end());

  DecodeResult r;
  r.predicted_length = out.size();
  r.tokens = std::move(out);
  r.latency_ns = elapsed_ns(t0);
  return r;
}

DecodeResult complete_any(const Model<float>& model,
                          const std::vector<int>& context_ids) {
  switch (model.kind()) {
    case ModelKind::Nar:
      return complete_line(model, context_ids);
    case ModelKind::ArL2R:
      return complete_line_ar(model, context_ids, Direction::L2R);
    case ModelKind::ArR2L:
      return complete_line_ar(model, context_ids, Direction::R2L);
    case ModelKind::Dam:
      break;
  }
  throw Error("complete_any: model kind does not decode completions");
}

LatencyStats latency_bench(const Model<float>& model,
                           const std::vector<EncodedPair>& test,
                           std::size_t min_target_len, std::size_t warmup) {
  std::vector<const EncodedPair*> kept;
  for (const auto& p : test)
    if (std::size_t(p.true_length) >= min_target_len) kept.push_back(&p);
  if (kept.empty())
    throw EmptyTestSet("latency_bench: no example has target length >= " +
                       std::to_string(min_target_len));

  for (std::size_t i = 0; i < warmup; ++i)
    complete_any(model, kept.front()->context_ids);

  LatencyStats stats;
  stats.per_example_ns.reserve(kept.size());
  double total = 0.0;
  for (const auto* p : kept) {
    const auto r = complete_any(model, p->context_ids);
    stats.per_example_ns.push_back(double(r.latency_ns));
    total += double(r.latency_ns);
  }
  stats.examples = kept.size();
  stats.mean_latency_ns = total / double(kept.size());
  return stats;
}

EvalReport evaluate(const Model<float>& model,
                    const std::vector<EncodedPair>& test,
                    const Vocabulary& vocab) {
  if (test.empty()) throw EmptyTestSet("evaluate: empty test set");

  auto to_strings = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.decode(id));
    return out;
  };

  EvalReport rep;
  std::vector<std::vector<std::string>> all_preds;
  double em_sum = 0, bleu_sum = 0, es_sum = 0, latency_sum = 0;
  for (const auto& p : test) {
    const auto r = complete_any(model, p.context_ids);
    const auto pred = to_strings(r.tokens);
    const auto gold = to_strings(p.target_ids);
    em_sum += exact_match(pred, gold) ? 1.0 : 0.0;
    bleu_sum += bleu(pred, gold);
    es_sum += edit_similarity(join_tokens(pred), join_tokens(gold));
    latency_sum += double(r.latency_ns);
    all_preds.push_back(pred);
  }
  const double n = double(test.size());
  rep.em = em_sum / n;
  rep.bleu = bleu_sum / n;
  rep.es = es_sum / n;
  rep.repetition_ratio = repetition_ratio(all_preds);
  rep.mean_latency_ns = latency_sum / n;
  return rep;
}

}  // namespace sanar
