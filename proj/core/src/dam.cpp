#include "sanar/dam.hpp"

#include <algorithm>

#include "sanar/decode.hpp"
#include "sanar/metrics.hpp"

namespace sanar {

std::string to_string(AttnAgg agg) {
  return agg == AttnAgg::Mean ? "mean" : "last-layer";
}

AttnAgg attn_agg_from_string(const std::string& s) {
  if (s == "mean") return AttnAgg::Mean;
  if (s == "last-layer") return AttnAgg::LastLayer;
  throw ParseError("unknown attention aggregation '" + s +
                   "' (expected mean or last-layer)");
}

Tensor<float> aggregate_maps(const std::vector<Tensor<float>>& layer_maps,
                             AttnAgg agg) {
  if (layer_maps.empty())
    throw ShapeMismatch("aggregate_maps: no attention maps");
  if (agg == AttnAgg::LastLayer) return layer_maps.back();
  Tensor<float> out(layer_maps.front().shape());
  for (const auto& m : layer_maps) {
    if (!m.same_shape(out))
      throw ShapeMismatch("aggregate_maps: layer map shape mismatch");
    for (std::size_t i = 0; i < m.numel(); ++i) out[i] += m[i];
  }
  const float inv = 1.0f / float(layer_maps.size());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
  return out;
}

std::unique_ptr<Model<float>> train_dam(const std::vector<EncodedPair>& pairs,
                                        const ModelConfig& mc, TrainConfig tc,
                                        double mask_prob,
                                        const std::string& out_dir,
                                        std::uint64_t vocab_hash) {
  tc.mask_prob = mask_prob;
  tc.eval_every = 0;  // the masked LM has no completion EM to probe
  tc.stop_train_em = 0.0;
  auto model = std::make_unique<Model<float>>(ModelKind::Dam, mc, tc.seed);
  train_model(*model, pairs, tc, out_dir, vocab_hash);
  return model;
}

std::vector<std::size_t> bernoulli_target_mask(std::size_t target_len,
                                               double mask_prob,
                                               std::uint64_t seed,
                                               std::uint64_t index) {
  auto rng = split_rng(seed, 3, index);
  std::vector<std::size_t> pos;
  for (std::size_t j = 1; j <= target_len; ++j)
    if (rand_unit(rng) < mask_prob) pos.push_back(j);
  if (pos.empty()) pos.push_back(1 + rand_index(rng, target_len));
  return pos;
}

DensityPoint density_point(const Model<float>& dam,
                           const std::vector<EncodedPair>& test,
                           double mask_prob, AttnAgg agg, std::uint64_t seed) {
  if (test.empty()) throw EmptyTestSet("density_point: empty test set");

  DensityPoint point;
  point.mask_prob = mask_prob;
  double alpha_sum = 0.0;
  for (std::size_t idx = 0; idx < test.size(); ++idx) {
    const auto& p = test[idx];
    // The joint model sees the raw context (no length-query token).
    const std::vector<int> source(p.context_ids.begin() + 1,
                                  p.context_ids.end());
    const auto& target = p.target_ids;
    if (source.empty() || target.empty()) continue;
    const auto masks =
        bernoulli_target_mask(target.size(), mask_prob, seed, idx);

    const auto out = dam.mix_attention_forward(source, target, masks);
    const auto map = aggregate_maps(out.layer_maps, agg);
    for (auto pos : masks) {
      const double a =
          attention_density(map, target.size(), source.size(), pos - 1);
      point.alphas.push_back(a);
      alpha_sum += a;
    }
  }
  if (point.alphas.empty())
    throw EmptyTestSet("density_point: no masked position was evaluated");
  point.masked_count = point.alphas.size();
  point.ratio = alpha_sum / double(point.masked_count);
  return point;
}

DensityReport density_ratio_curve(const std::vector<EncodedPair>& train_pairs,
                                  const std::vector<EncodedPair>& test_pairs,
                                  const ModelConfig& mc, const TrainConfig& tc,
                                  const std::vector<double>& mask_probs,
                                  AttnAgg agg, const std::string& work_dir,
                                  std::uint64_t vocab_hash) {
  if (mask_probs.empty())
    throw Error("density_ratio_curve: no masking probabilities given");
  DensityReport report;
  report.agg = agg;
  for (double p : mask_probs) {
    char tag[32];
    std::snprintf(tag, sizeof(tag), "%g", p);
    const auto model = train_dam(train_pairs, mc, tc, p,
                                 work_dir + "/dam-p" + tag, vocab_hash);
    report.points.push_back(
        density_point(*model, test_pairs, p, agg, tc.seed));
  }
  return report;
}

OrderStudyReport order_study(const Model<float>& l2r, const Model<float>& r2l,
                             const std::vector<EncodedPair>& test,
                             const Vocabulary& vocab) {
  if (test.empty()) throw EmptyTestSet("order_study: empty test set");

  auto to_strings = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.decode(id));
    return out;
  };

  // Each model decodes in its own trained direction, so passing the same
  // model twice gives the degenerate self-comparison (only-buckets empty).
  const Direction dir_l = direction_of(l2r.kind());
  const Direction dir_r = direction_of(r2l.kind());

  OrderStudyReport rep;
  rep.examples = test.size();
  for (const auto& p : test) {
    const auto rl = complete_line_ar(l2r, p.context_ids, dir_l);
    const auto rr = complete_line_ar(r2l, p.context_ids, dir_r);
    const bool em_l = rl.tokens == p.target_ids;
    const bool em_r = rr.tokens == p.target_ids;

    const auto gold = join_tokens(to_strings(p.target_ids));
    const bool es_l =
        edit_similarity(join_tokens(to_strings(rl.tokens)), gold) > 0.5;
    const bool es_r =
        edit_similarity(join_tokens(to_strings(rr.tokens)), gold) > 0.5;

    rep.only_l2r_em += em_l && !em_r;
    rep.only_r2l_em += !em_l && em_r;
    rep.both_em += em_l && em_r;
    rep.neither_em += !em_l && !em_r;
    rep.only_l2r_es += es_l && !es_r;
    rep.only_r2l_es += !es_l && es_r;
    rep.both_es += es_l && es_r;
    rep.neither_es += !es_l && !es_r;
  }
  const double n = double(test.size());
  for (double* f : {&rep.only_l2r_em, &rep.only_r2l_em, &rep.both_em,
                    &rep.neither_em, &rep.only_l2r_es, &rep.only_r2l_es,
                    &rep.both_es, &rep.neither_es})
    *f /= n;
  return rep;
}

}  // namespace sanar
