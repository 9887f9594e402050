#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sanar/corpus.hpp"
#include "sanar/model.hpp"
#include "sanar/training.hpp"

namespace sanar {

/// How per-layer head-averaged attention maps are collapsed into the single
/// map the density analysis reads: mean over all layers (and, since every
/// layer averages the same number of heads, over all layer/head pairs), or
/// the last layer alone.
enum class AttnAgg { Mean, LastLayer };

std::string to_string(AttnAgg agg);
AttnAgg attn_agg_from_string(const std::string& s);

/// Density of attention mass on the target side for one query row of a
/// joint-attention map whose keys are laid out [N target keys; M source
/// keys]:  alpha = mean(target mass) / (mean(target) + mean(source)).
/// `row` is the 0-based query row.  Throws DegenerateRow when the row sums
/// to zero and ShapeMismatch on inconsistent layout.
template <typename S>
double attention_density(const Tensor<S>& map, std::size_t n_target,
                         std::size_t m_source, std::size_t row) {
  if (n_target == 0 || m_source == 0)
    throw ShapeMismatch("attention_density: empty target or source side");
  if (map.cols() != n_target + m_source)
    throw ShapeMismatch("attention_density: map has " +
                        std::to_string(map.cols()) + " keys, expected " +
                        std::to_string(n_target + m_source));
  if (row >= map.rows())
    throw ShapeMismatch("attention_density: query row out of range");
  double target_sum = 0, source_sum = 0;
  for (std::size_t j = 0; j < n_target; ++j) target_sum += double(map.at(row, j));
  for (std::size_t j = n_target; j < map.cols(); ++j)
    source_sum += double(map.at(row, j));
  if (target_sum + source_sum == 0.0)
    throw DegenerateRow("attention_density: attention row sums to zero");
  const double target_mean = target_sum / double(n_target);
  const double source_mean = source_sum / double(m_source);
  return target_mean / (target_mean + source_mean);
}

/// Collapses the per-layer head-averaged maps per `agg`.
Tensor<float> aggregate_maps(const std::vector<Tensor<float>>& layer_maps,
                             AttnAgg agg);

/// R(P) evaluation for one masking probability.
struct DensityPoint {
  double mask_prob = 0.0;       // P
  double ratio = 0.0;           // R(P): mean alpha over all masked tokens
  std::vector<double> alphas;   // pooled per-masked-token samples
  std::size_t masked_count = 0;
};

struct DensityReport {
  AttnAgg agg = AttnAgg::Mean;
  std::vector<DensityPoint> points;  // aligned with the requested P list
};

/// Trains one masked-LM dependency model for masking probability P on
/// `pairs` (cfg.mask_prob is overridden by P).  Artifacts land in out_dir.
std::unique_ptr<Model<float>> train_dam(const std::vector<EncodedPair>& pairs,
                                        const ModelConfig& mc, TrainConfig tc,
                                        double mask_prob,
                                        const std::string& out_dir,
                                        std::uint64_t vocab_hash);

/// Deterministic Bernoulli(P) draw over 1-based target positions with the
/// forced minimum of one pick (stream 3, keyed by example index); the
/// masking law shared by DAM evaluation.
std::vector<std::size_t> bernoulli_target_mask(std::size_t target_len,
                                               double mask_prob,
                                               std::uint64_t seed,
                                               std::uint64_t index);

/// Evaluates the attention density ratio of one trained DAM over the test
/// set at its own masking probability: every example gets a Bernoulli(P)
/// target mask (at least one position, deterministic per seed/example), and
/// alpha is read off the aggregated attention map at every masked row.
DensityPoint density_point(const Model<float>& dam,
                           const std::vector<EncodedPair>& test,
                           double mask_prob, AttnAgg agg, std::uint64_t seed);

/// One model per P: trains (when `train_pairs` non-empty) and evaluates the
/// whole R(P) curve.  Models are trained with identical seeds and configs
/// except for the masking probability.
DensityReport density_ratio_curve(const std::vector<EncodedPair>& train_pairs,
                                  const std::vector<EncodedPair>& test_pairs,
                                  const ModelConfig& mc, const TrainConfig& tc,
                                  const std::vector<double>& mask_probs,
                                  AttnAgg agg, const std::string& work_dir,
                                  std::uint64_t vocab_hash);

/// Left-to-right vs right-to-left comparison buckets.  For each metric
/// family the four fractions partition the test set (they sum to 1).
struct OrderStudyReport {
  std::size_t examples = 0;
  double only_l2r_em = 0, only_r2l_em = 0, both_em = 0, neither_em = 0;
  double only_l2r_es = 0, only_r2l_es = 0, both_es = 0, neither_es = 0;
  // the ES family buckets use the ES > 0.5 criterion per direction
};

/// Decodes every test pair with both directional models and buckets the
/// outcomes.  Throws EmptyTestSet.
OrderStudyReport order_study(const Model<float>& l2r, const Model<float>& r2l,
                             const std::vector<EncodedPair>& test,
                             const Vocabulary& vocab);

}  // namespace sanar
