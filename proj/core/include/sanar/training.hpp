#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sanar/corpus.hpp"
#include "sanar/model.hpp"
#include "sanar/optimizer.hpp"
#include "sanar/sampling.hpp"

namespace sanar {

/// Knobs for every trainer (the parallel completer, the two autoregressive
/// baselines, and the dependency-analysis masked LM).  Irrelevant fields are
/// ignored by trainers that do not use them.
struct TrainConfig {
  double lambda = 0.3;     // glance budget ratio
  double glance_p = 0.3;   // probability of syntax-guided glance sampling
  std::size_t batch_tokens = 4096;
  std::size_t warmup_steps = 100;
  double peak_lr = 1e-3;
  std::size_t total_steps = 3000;
  std::uint64_t seed = 42;
  double length_loss_weight = 1.0;
  std::size_t checkpoint_every = 0;  // extra checkpoint cadence; 0 = final only
  std::size_t eval_every = 0;        // train-EM probe cadence; 0 = never
  double stop_train_em = 0.0;        // stop once train EM >= this; 0 = off
  double mask_prob = 0.15;           // masked-LM masking probability P

  void validate() const;
};

/// Linear warmup to the peak, then inverse-square-root decay:
/// peak * step / warmup while step <= warmup, else peak * sqrt(warmup/step).
/// step is 1-based.
double lr_schedule(std::size_t step, std::size_t warmup_steps, double peak_lr);

/// Per-step training report row (one CSV line).
struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double token_loss = 0.0;
  double length_loss = 0.0;
  double glance_fraction = 0.0;  // sum of glance budgets / sum of |target|
  double lr = 0.0;
};

/// Formats one metrics row as the canonical CSV line (no trailing newline):
/// step,loss,token_loss,length_loss,glance_fraction,lr with round-trip
/// (%.17g) float formatting, so logs are byte-identical across runs.
std::string metrics_csv_row(const StepMetrics& m);
constexpr const char* kMetricsCsvHeader =
    "step,loss,token_loss,length_loss,glance_fraction,lr";

/// Evaluation-mode fully-parallel decode of each example at its gold length
/// (no gradient, no glances); returns per-example argmax token ids.  This is
/// the first pass of the two-pass procedure and by itself must leave the
/// parameters untouched.
std::vector<std::vector<int>> first_pass_predictions(
    const Model<float>& model, const std::vector<const EncodedPair*>& batch);

/// Scalar glance-masked loss on `g` for a packed batch: token cross-entropy
/// averaged over NON-glanced target rows plus length_loss_weight times the
/// length-class cross-entropy.  `glances` holds per-example 1-based glanced
/// positions.  When every row of the batch is glanced the token term is
/// dropped and only the length term remains.  `out` receives the separated
/// term values for logging when non-null.
typename Graph<float>::Ref sas_loss_packed(
    Graph<float>& g, Model<float>& model, typename Graph<float>::Ref logits,
    const std::vector<std::size_t>& tgt_offs,
    typename Graph<float>::Ref length_logits,
    const std::vector<const EncodedPair*>& batch,
    const std::vector<GlanceSet>& glances, double length_loss_weight,
    StepMetrics* out);

/// One two-pass training step of the parallel completer: evaluation-mode
/// first decode at gold length, per-example glance sampling from the
/// first-pass errors, then one gradient step on the glance-masked loss.
StepMetrics train_step(const std::vector<const EncodedPair*>& batch,
                       Model<float>& model, AdamState<float>& opt,
                       const TrainConfig& cfg, std::size_t step);

/// One teacher-forced cross-entropy step for an autoregressive model
/// (targets gain EOS; the right-to-left model sees reversed targets).
StepMetrics train_step_ar(const std::vector<const EncodedPair*>& batch,
                          Model<float>& model, AdamState<float>& opt,
                          const TrainConfig& cfg, std::size_t step);

/// One masked-LM step for the dependency-analysis model: each target token
/// is masked with probability cfg.mask_prob (at least one per example), and
/// the loss is cross-entropy on the masked positions only.
StepMetrics train_step_dam(const std::vector<const EncodedPair*>& batch,
                           Model<float>& model, AdamState<float>& opt,
                           const TrainConfig& cfg, std::size_t step);

/// Deterministic token-budget batching: examples are shuffled (per-epoch
/// stream), stably sorted by target then context length, and packed greedily
/// so each batch carries about `batch_tokens` context+target tokens; the
/// batch order is then shuffled again.  Returns index lists into `pairs`.
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<EncodedPair>& pairs, std::size_t batch_tokens,
    std::uint64_t seed, std::uint64_t epoch);

/// Full training loop shared by all model kinds.  Writes the metrics CSV to
/// `out_dir`/metrics.csv, checkpoints to `out_dir`/ckpt-<step>.bin every
/// checkpoint_every steps and `out_dir`/ckpt-final.bin at the end, probes
/// train EM every eval_every steps (parallel and AR kinds only) and stops
/// early once it reaches stop_train_em.  `on_step`, when given, observes
/// every step's metrics as they are produced.
struct TrainResult {
  std::vector<StepMetrics> steps;
  std::vector<std::pair<std::size_t, double>> em_probes;  // (step, train EM)
  std::size_t steps_taken = 0;
  bool stopped_early = false;
};

TrainResult train_model(Model<float>& model, const std::vector<EncodedPair>& pairs,
                        const TrainConfig& cfg, const std::string& out_dir,
                        std::uint64_t vocab_hash,
                        const std::function<void(const StepMetrics&)>& on_step = {});

}  // namespace sanar
