#include "sanar/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "sanar/checkpoint.hpp"
#include "sanar/decode.hpp"

namespace sanar {

void TrainConfig::validate() const {
  if (lambda < 0) throw Error("TrainConfig: lambda must be >= 0");
  if (glance_p < 0 || glance_p > 1)
    throw Error("TrainConfig: glance_p must be in [0, 1]");
  if (batch_tokens == 0) throw Error("TrainConfig: batch_tokens must be >= 1");
  if (warmup_steps == 0) throw Error("TrainConfig: warmup_steps must be >= 1");
  if (!(peak_lr > 0)) throw Error("TrainConfig: peak_lr must be positive");
  if (total_steps == 0) throw Error("TrainConfig: total_steps must be >= 1");
  if (length_loss_weight < 0)
    throw Error("TrainConfig: length_loss_weight must be >= 0");
  if (mask_prob <= 0 || mask_prob > 1)
    throw Error("TrainConfig: mask_prob must be in (0, 1]");
  if (stop_train_em < 0 || stop_train_em > 1)
    throw Error("TrainConfig: stop_train_em must be in [0, 1]");
}

double lr_schedule(std::size_t step, std::size_t warmup_steps, double peak_lr) {
  if (step == 0) throw Error("lr_schedule: step is 1-based");
  if (warmup_steps == 0) throw Error("lr_schedule: warmup_steps must be >= 1");
  if (step <= warmup_steps)
    return peak_lr * double(step) / double(warmup_steps);
  return peak_lr * std::sqrt(double(warmup_steps) / double(step));
}

std::string metrics_csv_row(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", m.step,
                m.loss, m.token_loss, m.length_loss, m.glance_fraction, m.lr);
  return buf;
}

namespace {

std::vector<std::vector<int>> contexts_of(
    const std::vector<const EncodedPair*>& batch) {
  std::vector<std::vector<int>> ctxs;
  ctxs.reserve(batch.size());
  for (const auto* p : batch) ctxs.push_back(p->context_ids);
  return ctxs;
}

std::vector<int> length_classes_of(const std::vector<const EncodedPair*>& batch,
                                   std::size_t max_len_class) {
  std::vector<int> classes;
  classes.reserve(batch.size());
  for (const auto* p : batch) {
    if (p->true_length < 1 || std::size_t(p->true_length) > max_len_class)
      throw Error("training: target length " + std::to_string(p->true_length) +
                  " outside [1, " + std::to_string(max_len_class) + "]");
    classes.push_back(p->true_length - 1);
  }
  return classes;
}

}  // namespace

std::vector<std::vector<int>> first_pass_predictions(
    const Model<float>& model, const std::vector<const EncodedPair*>& batch) {
  Graph<float> g(false);
  auto enc = model.encode_packed(g, contexts_of(batch), false, nullptr);
  std::vector<std::size_t> lens;
  lens.reserve(batch.size());
  for (const auto* p : batch) lens.push_back(p->target_ids.size());
  std::vector<std::size_t> toffs;
  auto h = model.softcopy_packed(g, enc, lens, &toffs);
  auto logits = model.decode_from_inputs(g, h, toffs, enc.h, enc.offs,
                                         /*causal=*/false, /*train=*/false,
                                         nullptr);
  const Tensor<float>& L = g.value(logits);

  std::vector<std::vector<int>> preds(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    preds[e].reserve(lens[e]);
    for (std::size_t j = 0; j < lens[e]; ++j)
      preds[e].push_back(int(argmax_row(L, toffs[e] + j)));
  }
  return preds;
}

typename Graph<float>::Ref sas_loss_packed(
    Graph<float>& g, Model<float>& model, typename Graph<float>::Ref logits,
    const std::vector<std::size_t>& tgt_offs,
    typename Graph<float>::Ref length_logits,
    const std::vector<const EncodedPair*>& batch,
    const std::vector<GlanceSet>& glances, double length_loss_weight,
    StepMetrics* out) {
  if (glances.size() != batch.size())
    throw ShapeMismatch("sas_loss_packed: glance set count mismatch");

  std::vector<int> flat_targets;
  std::vector<float> row_mask;
  flat_targets.reserve(tgt_offs.back());
  row_mask.reserve(tgt_offs.back());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& tgt = batch[e]->target_ids;
    std::vector<float> mask(tgt.size(), 1.0f);
    for (auto pos : glances[e].positions) mask[pos - 1] = 0.0f;  // glanced
    flat_targets.insert(flat_targets.end(), tgt.begin(), tgt.end());
    row_mask.insert(row_mask.end(), mask.begin(), mask.end());
  }

  const bool any_token = std::any_of(row_mask.begin(), row_mask.end(),
                                     [](float m) { return m != 0.0f; });
  auto len_ce = g.cross_entropy_rows(
      length_logits, length_classes_of(batch, model.config().max_len_class),
      std::vector<float>(batch.size(), 1.0f));
  auto weighted_len = g.scale(len_ce, float(length_loss_weight));

  if (out) {
    out->length_loss = double(g.value(len_ce)[0]);
    out->token_loss = 0.0;
  }
  if (!any_token) return weighted_len;  // every position glanced

  auto tok_ce = g.cross_entropy_rows(logits, flat_targets, row_mask);
  if (out) out->token_loss = double(g.value(tok_ce)[0]);
  return g.add(tok_ce, weighted_len);
}

StepMetrics train_step(const std::vector<const EncodedPair*>& batch,
                       Model<float>& model, AdamState<float>& opt,
                       const TrainConfig& cfg, std::size_t step) {
  if (batch.empty()) throw ShapeMismatch("train_step: empty batch");

  // Pass 1: evaluation-mode parallel decode at the gold lengths; no graph is
  // recorded, so this pass cannot move any parameter.
  const auto preds = first_pass_predictions(model, batch);

  // Stream 1 covers the per-step training randomness: glance draws first
  // (batch order), then the dropout draws of the second pass.
  auto rng = split_rng(cfg.seed, 1, step);
  std::vector<GlanceSet> glances;
  glances.reserve(batch.size());
  std::size_t budget_sum = 0, target_sum = 0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    glances.push_back(glancing_sample(batch[e]->target_ids, preds[e],
                                      batch[e]->target_types, cfg.lambda,
                                      cfg.glance_p, rng));
    budget_sum += glances.back().budget;
    target_sum += batch[e]->target_ids.size();
  }

  // Pass 2: recorded graph with the glanced gold tokens mixed in.
  Graph<float> g(true);
  auto enc = model.encode_packed(g, contexts_of(batch), true, &rng);
  std::vector<std::size_t> lens;
  for (const auto* p : batch) lens.push_back(p->target_ids.size());
  std::vector<std::size_t> toffs;
  auto sc = model.softcopy_packed(g, enc, lens, &toffs);

  std::vector<std::vector<int>> golds;
  std::vector<std::vector<float>> masks;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    golds.push_back(batch[e]->target_ids);
    std::vector<float> m(lens[e], 0.0f);
    for (auto pos : glances[e].positions) m[pos - 1] = 1.0f;
    masks.push_back(std::move(m));
  }
  auto mixed = model.glance_mix(g, sc, toffs, golds, masks);
  auto logits = model.decode_from_inputs(g, mixed, toffs, enc.h, enc.offs,
                                         /*causal=*/false, /*train=*/true,
                                         &rng);

  StepMetrics metrics;
  metrics.step = step;
  auto loss = sas_loss_packed(g, model, logits, toffs, enc.length_logits,
                              batch, glances, cfg.length_loss_weight,
                              &metrics);
  metrics.loss = double(g.value(loss)[0]);
  metrics.glance_fraction = double(budget_sum) / double(target_sum);
  metrics.lr = lr_schedule(step, cfg.warmup_steps, cfg.peak_lr);

  g.backward(loss);
  adam_step(model.parameters(), opt, float(metrics.lr));
  return metrics;
}

StepMetrics train_step_ar(const std::vector<const EncodedPair*>& batch,
                          Model<float>& model, AdamState<float>& opt,
                          const TrainConfig& cfg, std::size_t step) {
  if (batch.empty()) throw ShapeMismatch("train_step_ar: empty batch");
  const Direction dir = direction_of(model.kind());

  std::vector<std::vector<int>> targets;
  std::vector<int> flat;
  targets.reserve(batch.size());
  for (const auto* p : batch) {
    std::vector<int> t = p->target_ids;
    if (dir == Direction::R2L) std::reverse(t.begin(), t.end());
    t.push_back(Vocabulary::kEos);
    flat.insert(flat.end(), t.begin(), t.end());
    targets.push_back(std::move(t));
  }

  auto rng = split_rng(cfg.seed, 1, step);
  Graph<float> g(true);
  auto enc = model.encode_packed(g, contexts_of(batch), true, &rng);
  std::vector<std::size_t> toffs;
  auto logits = model.ar_decode_packed(g, enc, targets, true, &rng, &toffs);
  auto loss = g.cross_entropy_rows(logits, flat,
                                   std::vector<float>(flat.size(), 1.0f));

  StepMetrics metrics;
  metrics.step = step;
  metrics.loss = metrics.token_loss = double(g.value(loss)[0]);
  metrics.lr = lr_schedule(step, cfg.warmup_steps, cfg.peak_lr);

  g.backward(loss);
  adam_step(model.parameters(), opt, float(metrics.lr));
  return metrics;
}

StepMetrics train_step_dam(const std::vector<const EncodedPair*>& batch,
                           Model<float>& model, AdamState<float>& opt,
                           const TrainConfig& cfg, std::size_t step) {
  if (batch.empty()) throw ShapeMismatch("train_step_dam: empty batch");

  // Stream 3 drives the Bernoulli masking; at least one position is always
  // masked so the masked-LM loss is defined for every example.
  auto mask_rng = split_rng(cfg.seed, 3, step);
  std::vector<std::vector<int>> sources, targets;
  std::vector<std::vector<std::size_t>> mask_positions;
  for (const auto* p : batch) {
    // The joint model sees the raw context (no length-query token).
    sources.emplace_back(p->context_ids.begin() + 1, p->context_ids.end());
    if (sources.back().empty())
      throw ShapeMismatch("train_step_dam: empty context");
    targets.push_back(p->target_ids);
    std::vector<std::size_t> pos;
    for (std::size_t j = 1; j <= p->target_ids.size(); ++j)
      if (rand_unit(mask_rng) < cfg.mask_prob) pos.push_back(j);
    if (pos.empty())
      pos.push_back(1 + rand_index(mask_rng, p->target_ids.size()));
    mask_positions.push_back(std::move(pos));
  }

  auto rng = split_rng(cfg.seed, 1, step);
  Graph<float> g(true);
  std::vector<int> golds;
  auto logits = model.dam_packed(g, sources, targets, mask_positions, true,
                                 &rng, nullptr, &golds);
  auto loss = g.cross_entropy_rows(logits, golds,
                                   std::vector<float>(golds.size(), 1.0f));

  StepMetrics metrics;
  metrics.step = step;
  metrics.loss = metrics.token_loss = double(g.value(loss)[0]);
  metrics.lr = lr_schedule(step, cfg.warmup_steps, cfg.peak_lr);

  g.backward(loss);
  adam_step(model.parameters(), opt, float(metrics.lr));
  return metrics;
}

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<EncodedPair>& pairs, std::size_t batch_tokens,
    std::uint64_t seed, std::uint64_t epoch) {
  if (pairs.empty()) throw EmptyCorpus("make_batches: no training pairs");
  auto rng = split_rng(seed, 0, epoch);

  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with the project RNG: byte-identical batching everywhere.
  for (std::size_t i = 0; i + 1 < idx.size(); ++i)
    std::swap(idx[i], idx[i + rand_index(rng, idx.size() - i)]);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = std::make_pair(pairs[a].target_ids.size(),
                                   pairs[a].context_ids.size());
    const auto kb = std::make_pair(pairs[b].target_ids.size(),
                                   pairs[b].context_ids.size());
    return ka < kb;
  });

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t cur_tokens = 0;
  for (auto i : idx) {
    const std::size_t t = pairs[i].context_ids.size() +
                          pairs[i].target_ids.size();
    if (!cur.empty() && cur_tokens + t > batch_tokens) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_tokens = 0;
    }
    cur.push_back(i);
    cur_tokens += t;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));

  for (std::size_t i = 0; i + 1 < batches.size(); ++i)
    std::swap(batches[i], batches[i + rand_index(rng, batches.size() - i)]);
  return batches;
}

namespace {

/// Exact-match fraction of full decodes against the gold targets.
double train_em(const Model<float>& model,
                const std::vector<EncodedPair>& pairs) {
  std::size_t hits = 0;
  for (const auto& p : pairs)
    hits += complete_any(model, p.context_ids).tokens == p.target_ids;
  return double(hits) / double(pairs.size());
}

}  // namespace

TrainResult train_model(Model<float>& model,
                        const std::vector<EncodedPair>& pairs,
                        const TrainConfig& cfg, const std::string& out_dir,
                        std::uint64_t vocab_hash,
                        const std::function<void(const StepMetrics&)>& on_step) {
  cfg.validate();
  if (pairs.empty()) throw EmptyCorpus("train_model: no training pairs");
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir + "/metrics.csv", std::ios::trunc);
  if (!log) throw IoError("train_model: cannot write " + out_dir +
                          "/metrics.csv");
  log << kMetricsCsvHeader << '\n';

  AdamState<float> opt(model.parameters());
  TrainResult result;
  std::size_t step = 0;
  bool done = false;
  for (std::uint64_t epoch = 0; !done; ++epoch) {
    for (const auto& batch_idx :
         make_batches(pairs, cfg.batch_tokens, cfg.seed, epoch)) {
      step += 1;
      std::vector<const EncodedPair*> batch;
      batch.reserve(batch_idx.size());
      for (auto i : batch_idx) batch.push_back(&pairs[i]);

      StepMetrics m;
      switch (model.kind()) {
        case ModelKind::Nar:
          m = train_step(batch, model, opt, cfg, step);
          break;
        case ModelKind::ArL2R:
        case ModelKind::ArR2L:
          m = train_step_ar(batch, model, opt, cfg, step);
          break;
        case ModelKind::Dam:
          m = train_step_dam(batch, model, opt, cfg, step);
          break;
      }
      log << metrics_csv_row(m) << '\n';
      result.steps.push_back(m);
      if (on_step) on_step(m);

      if (cfg.checkpoint_every != 0 && step % cfg.checkpoint_every == 0)
        save_checkpoint(model, vocab_hash,
                        out_dir + "/ckpt-" + std::to_string(step) + ".bin");

      if (cfg.eval_every != 0 && step % cfg.eval_every == 0 &&
          model.kind() != ModelKind::Dam) {
        const double em = train_em(model, pairs);
        result.em_probes.emplace_back(step, em);
        if (cfg.stop_train_em > 0 && em >= cfg.stop_train_em) {
          result.stopped_early = true;
          done = true;
          break;
        }
      }
      if (step >= cfg.total_steps) {
        done = true;
        break;
      }
    }
  }
  result.steps_taken = step;
  save_checkpoint(model, vocab_hash, out_dir + "/ckpt-final.bin");
  return result;
}

}  // namespace sanar
