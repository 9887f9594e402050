#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sanar/corpus.hpp"
#include "sanar/error.hpp"
#include "sanar/graph.hpp"
#include "sanar/init.hpp"
#include "sanar/model_config.hpp"
#include "sanar/rng.hpp"
#include "sanar/tensor.hpp"

namespace sanar {

/// The four trainable variants sharing one parameter/tape substrate:
/// the single-pass parallel completer, the two autoregressive baselines
/// (identical architecture, trained on opposite target orders), and the
/// masked-LM dependency-analysis model with mix-attention.
enum class ModelKind { Nar, ArL2R, ArR2L, Dam };

enum class Direction { L2R, R2L };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Nar: return "nar";
    case ModelKind::ArL2R: return "ar_l2r";
    case ModelKind::ArR2L: return "ar_r2l";
    case ModelKind::Dam: return "dam";
  }
  throw Error("unknown model kind");
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "nar") return ModelKind::Nar;
  if (s == "ar_l2r" || s == "ar-l2r") return ModelKind::ArL2R;
  if (s == "ar_r2l" || s == "ar-r2l") return ModelKind::ArR2L;
  if (s == "dam") return ModelKind::Dam;
  throw ParseError("unknown model kind: " + s);
}

inline Direction direction_of(ModelKind k) {
  if (k == ModelKind::ArL2R) return Direction::L2R;
  if (k == ModelKind::ArR2L) return Direction::R2L;
  throw Error("model kind has no decoding direction");
}

/// Parameter-free sinusoidal position table [max_positions, d]:
/// pe(p, 2i) = sin(p / 10000^(2i/d)), pe(p, 2i+1) = cos(same angle).
template <typename S>
Tensor<S> sinusoidal_positions(std::size_t max_positions, std::size_t d) {
  Tensor<S> pe({max_positions, d});
  for (std::size_t p = 0; p < max_positions; ++p)
    for (std::size_t c = 0; c < d; ++c) {
      const std::size_t k = c - (c % 2);
      const double angle =
          double(p) / std::pow(10000.0, double(k) / double(d));
      pe.at(p, c) = S(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

/// Soft-copy mixing weights [N, M]: row j is softmax over source positions i
/// of -|j - i| / tau, so each decoder input is a distance-weighted mixture
/// of encoder states and every row sums to 1.
template <typename S>
Tensor<S> soft_copy_weights(std::size_t m, std::size_t n, S tau) {
  if (m == 0 || n == 0) throw ShapeMismatch("soft_copy_weights: empty side");
  if (!(tau > S(0))) throw Error("soft_copy_weights: tau must be positive");
  Tensor<S> w({n, m});
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t dmin = m - 1;
    for (std::size_t i = 0; i < m; ++i)
      dmin = std::min(dmin, j >= i ? j - i : i - j);
    S z = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t dist = j >= i ? j - i : i - j;
      const S e = std::exp(-S(dist - dmin) / tau);
      w.at(j, i) = e;
      z += e;
    }
    const S inv = S(1) / z;
    for (std::size_t i = 0; i < m; ++i) w.at(j, i) *= inv;
  }
  return w;
}

/// Argmax over a flat tensor, ties broken toward the lowest index.
template <typename S>
std::size_t argmax_flat(const Tensor<S>& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i)
    if (t[i] > t[best]) best = i;
  return best;
}

/// Length class i stands for length i + 1, so the prediction is always in
/// [1, max_len_class] by construction.
template <typename S>
std::size_t predicted_length(const Tensor<S>& length_logits) {
  return argmax_flat(length_logits) + 1;
}

template <typename S>
struct EncoderOutput {
  Tensor<S> states;         ///< [M, d], one row per context position
  Tensor<S> length_logits;  ///< [max_len_class] (empty unless kind == Nar)
};

template <typename S>
struct MixAttentionOut {
  Tensor<S> logits;                  ///< [|mask_positions|, vocab]
  std::vector<Tensor<S>> layer_maps; ///< per layer: head-averaged [N+M, N+M]
};

/// One model instance: pinned parameter storage (stable addresses for the
/// tape and the optimizer) plus graph builders for every forward variant.
/// Instances are neither copyable nor movable; training mutates a single
/// owner, frozen instances may be read concurrently.
template <typename S>
class Model {
 public:
  using Ref = typename Graph<S>::Ref;

  Model(ModelKind kind, ModelConfig cfg, std::uint64_t seed)
      : kind_(kind), cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t d = cfg_.model_width;
    embedding_ = Parameter<S>("embedding", Tensor<S>({cfg_.vocab_size, d}));
    if (kind_ == ModelKind::Dam) {
      joint_.resize(cfg_.layers);
      for (std::size_t i = 0; i < cfg_.layers; ++i)
        name_enc_layer(joint_[i], "joint." + std::to_string(i));
      name_ln(joint_final_, "joint.final");
      mask_emb_ = Parameter<S>("mask_emb", Tensor<S>({std::size_t(1), d}));
    } else {
      enc_.resize(cfg_.layers);
      for (std::size_t i = 0; i < cfg_.layers; ++i)
        name_enc_layer(enc_[i], "enc." + std::to_string(i));
      name_ln(enc_final_, "enc.final");
      if (kind_ == ModelKind::Nar) {
        len_w_ = Parameter<S>("len.w", Tensor<S>({cfg_.max_len_class, d}));
        len_b_ = Parameter<S>("len.b", Tensor<S>({cfg_.max_len_class}));
      }
      dec_.resize(cfg_.layers);
      for (std::size_t i = 0; i < cfg_.layers; ++i)
        name_dec_layer(dec_[i], "dec." + std::to_string(i));
      name_ln(dec_final_, "dec.final");
    }
    pos_ = sinusoidal_positions<S>(cfg_.max_positions, d);
    init_parameters(seed);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ModelKind kind() const { return kind_; }
  const ModelConfig& config() const { return cfg_; }

  /// Every learnable tensor in a stable, kind-specific order; the order
  /// defines initialization draws, optimizer state and checkpoint layout.
  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    out.push_back(&embedding_);
    if (kind_ == ModelKind::Dam) {
      for (auto& l : joint_) collect_enc_layer(l, out);
      collect_ln(joint_final_, out);
      out.push_back(&mask_emb_);
      return out;
    }
    for (auto& l : enc_) collect_enc_layer(l, out);
    collect_ln(enc_final_, out);
    if (kind_ == ModelKind::Nar) {
      out.push_back(&len_w_);
      out.push_back(&len_b_);
    }
    for (auto& l : dec_) collect_dec_layer(l, out);
    collect_ln(dec_final_, out);
    return out;
  }

  std::vector<const Parameter<S>*> parameters() const {
    auto mut = const_cast<Model*>(this)->parameters();
    return std::vector<const Parameter<S>*>(mut.begin(), mut.end());
  }

  // ---- pass instrumentation ----
  // One increment per stack invocation, batched or not; the single-pass
  // decoding contract is asserted against these.

  std::uint64_t encoder_passes() const { return enc_passes_.load(); }
  std::uint64_t decoder_passes() const { return dec_passes_.load(); }
  void reset_pass_counters() const {
    enc_passes_.store(0);
    dec_passes_.store(0);
  }

  // =====================================================================
  // Per-example operations (eval mode, non-recording graphs)
  // =====================================================================

  /// Runs the context encoder; for the parallel completer also produces the
  /// length scores read off the leading LENGTH position.
  EncoderOutput<S> encode(const std::vector<int>& context_ids) const {
    if (kind_ == ModelKind::Dam) throw Error("encode: not defined for the DAM");
    check_context(context_ids);
    Graph<S> g(false);
    const std::vector<std::size_t> offs = {0, context_ids.size()};
    Ref h = encoder_stack(g, token_input(g, context_ids, offs, false, nullptr),
                          offs, false, nullptr);
    EncoderOutput<S> out;
    out.states = g.value(h);
    if (kind_ == ModelKind::Nar) {
      Ref ll = length_logits_packed(g, h, offs);
      out.length_logits = Tensor<S>({cfg_.max_len_class});
      for (std::size_t c = 0; c < cfg_.max_len_class; ++c)
        out.length_logits[c] = g.value(ll).at(0, c);
    }
    return out;
  }

  /// H = W . S with the distance-softmax weights; no learnable parameters.
  Tensor<S> soft_copy(const Tensor<S>& states, std::size_t n) const {
    if (n == 0) throw ShapeMismatch("soft_copy: target length must be >= 1");
    Tensor<S> w = soft_copy_weights<S>(states.rows(), n, S(cfg_.softcopy_tau));
    Tensor<S> h({n, states.cols()});
    detail::gemm(false, false, int(n), int(states.cols()), int(states.rows()),
                 S(1), w.data(), states.data(), S(0), h.data());
    return h;
  }

  /// Single unmasked parallel decoder pass.  dec_inputs are the soft-copy
  /// rows (positional encodings are added inside); glanced maps 1-based
  /// target positions to gold token ids whose embeddings replace the
  /// corresponding input rows.  Returns logits [N, vocab].
  Tensor<S> decode_parallel(const Tensor<S>& dec_inputs, const Tensor<S>& states,
                            const std::map<std::size_t, int>& glanced = {}) const {
    if (kind_ != ModelKind::Nar)
      throw Error("decode_parallel: model is not the parallel completer");
    const std::size_t n = dec_inputs.rows();
    if (n == 0 || dec_inputs.cols() != cfg_.model_width ||
        states.cols() != cfg_.model_width)
      throw ShapeMismatch("decode_parallel: bad input shapes");
    check_positions(n);
    Graph<S> g(false);
    Ref h = g.constant_view(&dec_inputs);
    if (!glanced.empty()) {
      std::vector<S> keep(n, S(1)), take(n, S(0));
      std::vector<int> ids(n, Vocabulary::kPad);
      for (const auto& [pos, tok] : glanced) {
        if (pos < 1 || pos > n)
          throw GlancePositionOutOfRange("glance position " +
                                         std::to_string(pos) + " not in [1, " +
                                         std::to_string(n) + "]");
        keep[pos - 1] = S(0);
        take[pos - 1] = S(1);
        ids[pos - 1] = tok;
      }
      h = g.add(g.mul_rows(h, keep),
                g.mul_rows(scaled_embedding(g, ids), take));
    }
    Ref logits = decode_from_inputs(g, h, {0, n}, g.constant_view(&states),
                                    {0, states.rows()}, false, false, nullptr);
    return g.value(logits);
  }

  /// One stateless autoregressive step: causal self-attention over
  /// [EOS, prefix...], cross-attention into the encoder states, logits of
  /// the next token.  R2L models run on reversed targets by convention;
  /// the caller un-reverses final outputs.
  Tensor<S> decode_ar_step(const std::vector<int>& prefix_ids,
                           const Tensor<S>& states, Direction dir) const {
    if (kind_ != ModelKind::ArL2R && kind_ != ModelKind::ArR2L)
      throw Error("decode_ar_step: model is not autoregressive");
    if (direction_of(kind_) != dir)
      throw Error("decode_ar_step: direction does not match the trained model");
    std::vector<int> in;
    in.reserve(prefix_ids.size() + 1);
    in.push_back(Vocabulary::kEos);  // EOS doubles as begin-of-sequence
    in.insert(in.end(), prefix_ids.begin(), prefix_ids.end());
    check_positions(in.size());
    Graph<S> g(false);
    const std::vector<std::size_t> offs = {0, in.size()};
    Ref logits = decode_from_inputs(g, scaled_embedding(g, in), offs,
                                    g.constant_view(&states),
                                    {0, states.rows()}, true, false, nullptr);
    Tensor<S> out({cfg_.vocab_size});
    const Tensor<S>& all = g.value(logits);
    for (std::size_t c = 0; c < cfg_.vocab_size; ++c)
      out[c] = all.at(in.size() - 1, c);
    return out;
  }

  /// Masked-LM forward over the joint [target; source] sequence with
  /// mix-attention: source queries see only source keys, target queries see
  /// everything.  Masked target inputs are replaced by the learned MASK
  /// embedding.  Returns logits at the masked positions (1-based, in the
  /// order given) and per-layer head-averaged attention maps.
  MixAttentionOut<S> mix_attention_forward(
      const std::vector<int>& source_ids, const std::vector<int>& target_ids,
      const std::vector<std::size_t>& mask_positions) const {
    std::vector<std::vector<Tensor<S>>> maps;
    Graph<S> g(false);
    std::vector<int> golds;
    Ref logits = dam_packed(g, {source_ids}, {target_ids}, {mask_positions},
                            false, nullptr, &maps, &golds);
    MixAttentionOut<S> out;
    out.logits = g.value(logits);
    out.layer_maps.reserve(maps.size());
    for (auto& per_example : maps)
      out.layer_maps.push_back(std::move(per_example.at(0)));
    return out;
  }

  // =====================================================================
  // Packed batched graph builders (shared by training and batched eval)
  // =====================================================================

  struct PackedEncode {
    Ref h;                          ///< [sum of context lengths, d]
    Ref length_logits;              ///< [B, max_len_class]; invalid for AR
    std::vector<std::size_t> offs;  ///< B + 1 context offsets
  };

  /// Encoder over a packed batch of contexts (one stack invocation).
  PackedEncode encode_packed(Graph<S>& g,
                             const std::vector<std::vector<int>>& ctxs,
                             bool train, Rng* rng) const {
    if (kind_ == ModelKind::Dam)
      throw Error("encode_packed: not defined for the DAM");
    if (ctxs.empty()) throw ShapeMismatch("encode_packed: empty batch");
    PackedEncode out;
    out.offs = offsets_of(ctxs);
    std::vector<int> flat;
    flat.reserve(out.offs.back());
    for (const auto& c : ctxs) {
      check_context(c);
      flat.insert(flat.end(), c.begin(), c.end());
    }
    out.h = encoder_stack(g, token_input(g, flat, out.offs, train, rng),
                          out.offs, train, rng);
    if (kind_ == ModelKind::Nar)
      out.length_logits = length_logits_packed(g, out.h, out.offs);
    return out;
  }

  /// Per-example soft-copy of encoder states to the requested target
  /// lengths, concatenated back into packed rows.
  Ref softcopy_packed(Graph<S>& g, const PackedEncode& enc,
                      const std::vector<std::size_t>& target_lengths,
                      std::vector<std::size_t>* tgt_offs_out) const {
    const std::size_t b = enc.offs.size() - 1;
    if (target_lengths.size() != b)
      throw ShapeMismatch("softcopy_packed: batch size mismatch");
    std::vector<Ref> parts;
    parts.reserve(b);
    std::vector<std::size_t> tgt_offs(b + 1, 0);
    for (std::size_t e = 0; e < b; ++e) {
      const std::size_t m = enc.offs[e + 1] - enc.offs[e];
      const std::size_t n = target_lengths[e];
      if (n == 0) throw ShapeMismatch("softcopy_packed: zero target length");
      check_positions(n);
      tgt_offs[e + 1] = tgt_offs[e] + n;
      Ref se = g.slice_rows(enc.h, enc.offs[e], m);
      parts.push_back(
          g.matmul(g.constant(soft_copy_weights<S>(m, n, S(cfg_.softcopy_tau))),
                   se));
    }
    if (tgt_offs_out) *tgt_offs_out = tgt_offs;
    return b == 1 ? parts[0] : g.concat_rows(parts);
  }

  /// Replaces glanced rows of the packed soft-copy inputs by gold-token
  /// embeddings.  masks[e][j] is 1 to glance 0-based target position j.
  /// Non-glanced gold tokens are multiplied by exactly zero, so outputs are
  /// bitwise independent of them.  Empty golds/masks mean no glancing.
  Ref glance_mix(Graph<S>& g, Ref softcopy_rows,
                 const std::vector<std::size_t>& tgt_offs,
                 const std::vector<std::vector<int>>& golds,
                 const std::vector<std::vector<S>>& masks) const {
    if (golds.empty() && masks.empty()) return softcopy_rows;
    const std::size_t b = tgt_offs.size() - 1;
    if (golds.size() != b || masks.size() != b)
      throw ShapeMismatch("glance_mix: batch size mismatch");
    const std::size_t rt = tgt_offs.back();
    std::vector<S> keep(rt, S(1)), take(rt, S(0));
    std::vector<int> ids(rt, Vocabulary::kPad);
    bool any = false;
    for (std::size_t e = 0; e < b; ++e) {
      const std::size_t n = tgt_offs[e + 1] - tgt_offs[e];
      if (golds[e].size() != n || masks[e].size() != n)
        throw ShapeMismatch("glance_mix: per-example length mismatch");
      for (std::size_t j = 0; j < n; ++j) {
        if (masks[e][j] == S(0)) continue;
        any = true;
        keep[tgt_offs[e] + j] = S(0);
        take[tgt_offs[e] + j] = S(1);
        ids[tgt_offs[e] + j] = golds[e][j];
      }
    }
    if (!any) return softcopy_rows;
    return g.add(g.mul_rows(softcopy_rows, keep),
                 g.mul_rows(scaled_embedding(g, ids), take));
  }

  /// Decoder over explicit packed input rows (no positional encodings yet;
  /// they are added here).  causal=false is the unmasked parallel decoder,
  /// causal=true the autoregressive one.  Returns tied-projection logits
  /// [sum target lengths, vocab].  One stack invocation.
  Ref decode_from_inputs(Graph<S>& g, Ref inputs,
                         const std::vector<std::size_t>& tgt_offs, Ref enc_h,
                         const std::vector<std::size_t>& ctx_offs, bool causal,
                         bool train, Rng* rng) const {
    if (kind_ == ModelKind::Dam)
      throw Error("decode_from_inputs: not defined for the DAM");
    Ref x = g.add(inputs, g.constant(positional_rows(tgt_offs)));
    x = maybe_dropout(g, x, train, rng);
    x = decoder_stack(g, x, tgt_offs, enc_h, ctx_offs, causal, train, rng);
    return output_logits(g, x);
  }

  /// Teacher-forced autoregressive decode over packed targets (each ending
  /// with EOS): inputs are [EOS, t_0, ..., t_{n-2}], logits line up with
  /// [t_0, ..., t_{n-1}].
  Ref ar_decode_packed(Graph<S>& g, const PackedEncode& enc,
                       const std::vector<std::vector<int>>& targets_with_eos,
                       bool train, Rng* rng,
                       std::vector<std::size_t>* tgt_offs_out) const {
    const std::size_t b = enc.offs.size() - 1;
    if (targets_with_eos.size() != b)
      throw ShapeMismatch("ar_decode_packed: batch size mismatch");
    std::vector<std::size_t> tgt_offs = offsets_of(targets_with_eos);
    std::vector<int> shifted;
    shifted.reserve(tgt_offs.back());
    for (const auto& t : targets_with_eos) {
      if (t.empty()) throw ShapeMismatch("ar_decode_packed: empty target");
      check_positions(t.size());
      shifted.push_back(Vocabulary::kEos);
      shifted.insert(shifted.end(), t.begin(), t.end() - 1);
    }
    if (tgt_offs_out) *tgt_offs_out = tgt_offs;
    return decode_from_inputs(g, scaled_embedding(g, shifted), tgt_offs, enc.h,
                              enc.offs, true, train, rng);
  }

  /// Masked-LM forward over packed joint [target; source] sequences.
  /// mask_positions are 1-based per example.  Returns logits at the masked
  /// rows (examples in order, positions in the order given) and, through
  /// masked_golds_out, the gold ids those rows should predict.
  Ref dam_packed(Graph<S>& g, const std::vector<std::vector<int>>& sources,
                 const std::vector<std::vector<int>>& targets,
                 const std::vector<std::vector<std::size_t>>& mask_positions,
                 bool train, Rng* rng,
                 std::vector<std::vector<Tensor<S>>>* layer_maps,
                 std::vector<int>* masked_golds_out) const {
    if (kind_ != ModelKind::Dam)
      throw Error("dam_packed: model is not the dependency-analysis kind");
    const std::size_t b = sources.size();
    if (b == 0 || targets.size() != b || mask_positions.size() != b)
      throw ShapeMismatch("dam_packed: batch size mismatch");
    std::vector<std::size_t> offs(b + 1, 0);
    std::vector<std::size_t> boundaries(b);
    std::vector<int> flat;
    for (std::size_t e = 0; e < b; ++e) {
      if (targets[e].empty() || sources[e].empty())
        throw ShapeMismatch("dam_packed: empty target or source side");
      check_positions(targets[e].size() + sources[e].size());
      boundaries[e] = targets[e].size();
      offs[e + 1] = offs[e] + targets[e].size() + sources[e].size();
      flat.insert(flat.end(), targets[e].begin(), targets[e].end());
      flat.insert(flat.end(), sources[e].begin(), sources[e].end());
    }
    // Masked rows: replace the scaled token embedding by the learned MASK
    // embedding (broadcast from its single row, so gradients accumulate).
    std::vector<S> keep(offs.back(), S(1)), take(offs.back(), S(0));
    std::vector<int> rows;
    std::vector<int> golds;
    for (std::size_t e = 0; e < b; ++e)
      for (std::size_t pos : mask_positions[e]) {
        if (pos < 1 || pos > targets[e].size())
          throw Error("dam_packed: mask position " + std::to_string(pos) +
                      " outside the target side");
        const std::size_t r = offs[e] + pos - 1;
        if (take[r] != S(0))
          throw Error("dam_packed: duplicate mask position");
        keep[r] = S(0);
        take[r] = S(1);
        rows.push_back(int(r));
        golds.push_back(targets[e][pos - 1]);
      }
    // An empty mask set is legal and yields empty logits; training layers
    // above force at least one mask per example.
    Ref x = g.add(
        g.mul_rows(scaled_embedding(g, flat), keep),
        g.mul_rows(g.embedding_rows(pref(g, mask_emb_),
                                    std::vector<int>(offs.back(), 0)),
                   take));
    x = g.add(x, g.constant(positional_rows(offs)));
    x = maybe_dropout(g, x, train, rng);
    x = joint_stack(g, x, offs, boundaries, train, rng, layer_maps);
    if (masked_golds_out) *masked_golds_out = golds;
    return output_logits(g, g.gather_rows(x, rows));
  }

  /// Length scores for every example in a packed encoder batch, read from
  /// each context's leading LENGTH row.  [B, max_len_class].
  Ref length_logits_packed(Graph<S>& g, Ref enc_h,
                           const std::vector<std::size_t>& ctx_offs) const {
    if (kind_ != ModelKind::Nar)
      throw Error("length head: only the parallel completer has one");
    std::vector<int> rows(ctx_offs.size() - 1);
    for (std::size_t e = 0; e + 1 < ctx_offs.size(); ++e)
      rows[e] = int(ctx_offs[e]);
    return g.add_bias(g.matmul_nt(g.gather_rows(enc_h, rows), pref(g, len_w_)),
                      pref(g, len_b_));
  }

  /// Tied output projection: logits = H . E^T.
  Ref output_logits(Graph<S>& g, Ref h) const {
    return g.matmul_nt(h, pref(g, embedding_));
  }

  /// Token embeddings scaled by sqrt(width), no positions.
  Ref scaled_embedding(Graph<S>& g, const std::vector<int>& ids) const {
    return g.scale(g.embedding_rows(pref(g, embedding_), ids),
                   S(std::sqrt(double(cfg_.model_width))));
  }

 private:
  struct LnP {
    Parameter<S> g, b;
  };
  struct AttnP {
    Parameter<S> wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FfnP {
    Parameter<S> w1, b1, w2, b2;
  };
  struct EncLayerP {
    LnP ln1;
    AttnP self;
    LnP ln2;
    FfnP ffn;
  };
  struct DecLayerP {
    LnP ln1;
    AttnP self;
    LnP lnc;
    AttnP cross;
    LnP ln2;
    FfnP ffn;
  };

  // ---- parameter plumbing ----

  void name_ln(LnP& p, const std::string& base) {
    const std::size_t d = cfg_.model_width;
    p.g = Parameter<S>(base + ".g", Tensor<S>({d}));
    p.b = Parameter<S>(base + ".b", Tensor<S>({d}));
  }

  void name_attn(AttnP& p, const std::string& base) {
    const std::size_t d = cfg_.model_width;
    p.wq = Parameter<S>(base + ".wq", Tensor<S>({d, d}));
    p.bq = Parameter<S>(base + ".bq", Tensor<S>({d}));
    p.wk = Parameter<S>(base + ".wk", Tensor<S>({d, d}));
    p.bk = Parameter<S>(base + ".bk", Tensor<S>({d}));
    p.wv = Parameter<S>(base + ".wv", Tensor<S>({d, d}));
    p.bv = Parameter<S>(base + ".bv", Tensor<S>({d}));
    p.wo = Parameter<S>(base + ".wo", Tensor<S>({d, d}));
    p.bo = Parameter<S>(base + ".bo", Tensor<S>({d}));
  }

  void name_ffn(FfnP& p, const std::string& base) {
    const std::size_t d = cfg_.model_width, f = cfg_.ffn_width;
    p.w1 = Parameter<S>(base + ".w1", Tensor<S>({d, f}));
    p.b1 = Parameter<S>(base + ".b1", Tensor<S>({f}));
    p.w2 = Parameter<S>(base + ".w2", Tensor<S>({f, d}));
    p.b2 = Parameter<S>(base + ".b2", Tensor<S>({d}));
  }

  void name_enc_layer(EncLayerP& l, const std::string& base) {
    name_ln(l.ln1, base + ".ln1");
    name_attn(l.self, base + ".self");
    name_ln(l.ln2, base + ".ln2");
    name_ffn(l.ffn, base + ".ffn");
  }

  void name_dec_layer(DecLayerP& l, const std::string& base) {
    name_ln(l.ln1, base + ".ln1");
    name_attn(l.self, base + ".self");
    name_ln(l.lnc, base + ".lnc");
    name_attn(l.cross, base + ".cross");
    name_ln(l.ln2, base + ".ln2");
    name_ffn(l.ffn, base + ".ffn");
  }

  static void collect_ln(LnP& p, std::vector<Parameter<S>*>& out) {
    out.push_back(&p.g);
    out.push_back(&p.b);
  }
  static void collect_attn(AttnP& p, std::vector<Parameter<S>*>& out) {
    for (Parameter<S>* q : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo})
      out.push_back(q);
  }
  static void collect_ffn(FfnP& p, std::vector<Parameter<S>*>& out) {
    for (Parameter<S>* q : {&p.w1, &p.b1, &p.w2, &p.b2}) out.push_back(q);
  }
  static void collect_enc_layer(EncLayerP& l, std::vector<Parameter<S>*>& out) {
    collect_ln(l.ln1, out);
    collect_attn(l.self, out);
    collect_ln(l.ln2, out);
    collect_ffn(l.ffn, out);
  }
  static void collect_dec_layer(DecLayerP& l, std::vector<Parameter<S>*>& out) {
    collect_ln(l.ln1, out);
    collect_attn(l.self, out);
    collect_ln(l.lnc, out);
    collect_attn(l.cross, out);
    collect_ln(l.ln2, out);
    collect_ffn(l.ffn, out);
  }

  /// Deterministic init: every tensor draws from its own split stream in
  /// parameters() order.  Last name component decides the family:
  /// embeddings N(0, d^-1/2), weights Xavier-uniform, gains 1, biases 0.
  void init_parameters(std::uint64_t seed) {
    std::uint64_t idx = 0;
    for (Parameter<S>* p : parameters()) {
      Rng rng = split_rng(seed, 2, idx++);
      const std::string leaf = p->name.substr(p->name.rfind('.') + 1);
      if (p->name == "embedding" || p->name == "mask_emb")
        p->value = normal_embedding<S>(p->value.rows(), p->value.cols(), rng);
      else if (leaf[0] == 'w')
        p->value = xavier_uniform<S>(p->value.rows(), p->value.cols(), rng);
      else if (leaf[0] == 'g')
        p->value.fill(S(1));
      // biases stay zero
    }
  }

  // ---- graph helpers ----

  /// Parameter node: gradient-tracked on recording graphs (the model must
  /// then be owned mutable — training is), read-only view otherwise.
  Ref pref(Graph<S>& g, const Parameter<S>& p) const {
    if (g.recording()) return g.param(const_cast<Parameter<S>&>(p));
    return g.param(p);
  }

  Ref maybe_dropout(Graph<S>& g, Ref x, bool train, Rng* rng) const {
    if (!train || cfg_.dropout <= 0.0) return x;
    if (!rng) throw Error("training forward needs an RNG for dropout");
    return g.dropout(x, cfg_.dropout, *rng);
  }

  static std::vector<std::size_t> offsets_of(
      const std::vector<std::vector<int>>& seqs) {
    std::vector<std::size_t> offs(seqs.size() + 1, 0);
    for (std::size_t i = 0; i < seqs.size(); ++i)
      offs[i + 1] = offs[i] + seqs[i].size();
    return offs;
  }

  void check_context(const std::vector<int>& ctx) const {
    if (ctx.empty()) throw ShapeMismatch("context must be non-empty");
    if (ctx[0] != Vocabulary::kLength)
      throw Error("context must begin with the LENGTH token");
    check_positions(ctx.size());
  }

  void check_positions(std::size_t n) const {
    if (n > cfg_.max_positions)
      throw ContextTooLong("sequence of " + std::to_string(n) +
                           " exceeds the positional range " +
                           std::to_string(cfg_.max_positions));
  }

  /// Positional-encoding rows for packed sequences, each example restarting
  /// at position 0.
  Tensor<S> positional_rows(const std::vector<std::size_t>& offs) const {
    Tensor<S> out({offs.back(), cfg_.model_width});
    for (std::size_t e = 0; e + 1 < offs.size(); ++e) {
      check_positions(offs[e + 1] - offs[e]);
      for (std::size_t i = offs[e]; i < offs[e + 1]; ++i)
        std::copy(pos_.row(i - offs[e]), pos_.row(i - offs[e]) + cfg_.model_width,
                  out.row(i));
    }
    return out;
  }

  /// Token input assembly: embedding * sqrt(d) + positions, then dropout.
  Ref token_input(Graph<S>& g, const std::vector<int>& flat_ids,
                  const std::vector<std::size_t>& offs, bool train,
                  Rng* rng) const {
    Ref x = g.add(scaled_embedding(g, flat_ids),
                  g.constant(positional_rows(offs)));
    return maybe_dropout(g, x, train, rng);
  }

  Ref ln(Graph<S>& g, const LnP& p, Ref x) const {
    return g.layer_norm(x, pref(g, p.g), pref(g, p.b));
  }

  Ref attn_block(Graph<S>& g, const AttnP& p, Ref xq, Ref xkv,
                 AttnSpec<S> spec, bool train, Rng* rng,
                 std::vector<Tensor<S>>* save = nullptr) const {
    spec.heads = cfg_.heads;
    spec.save_weights = save;
    Ref q = g.add_bias(g.matmul(xq, pref(g, p.wq)), pref(g, p.bq));
    Ref k = g.add_bias(g.matmul(xkv, pref(g, p.wk)), pref(g, p.bk));
    Ref v = g.add_bias(g.matmul(xkv, pref(g, p.wv)), pref(g, p.bv));
    Ref ctx = g.attention(q, k, v, spec);
    Ref out = g.add_bias(g.matmul(ctx, pref(g, p.wo)), pref(g, p.bo));
    return maybe_dropout(g, out, train, rng);
  }

  Ref ffn_block(Graph<S>& g, const FfnP& p, Ref x, bool train, Rng* rng) const {
    Ref h = g.relu(g.add_bias(g.matmul(x, pref(g, p.w1)), pref(g, p.b1)));
    Ref out = g.add_bias(g.matmul(h, pref(g, p.w2)), pref(g, p.b2));
    return maybe_dropout(g, out, train, rng);
  }

  /// Pre-LN encoder: x += Attn(LN(x)); x += FFN(LN(x)); final LN.
  Ref encoder_stack(Graph<S>& g, Ref x, const std::vector<std::size_t>& offs,
                    bool train, Rng* rng) const {
    AttnSpec<S> spec;
    spec.mask = AttnSpec<S>::Mask::Full;
    spec.q_offs = offs;
    spec.kv_offs = offs;
    for (const EncLayerP& l : enc_) {
      Ref xn = ln(g, l.ln1, x);
      x = g.add(x, attn_block(g, l.self, xn, xn, spec, train, rng));
      x = g.add(x, ffn_block(g, l.ffn, ln(g, l.ln2, x), train, rng));
    }
    x = ln(g, enc_final_, x);
    enc_passes_.fetch_add(1, std::memory_order_relaxed);
    return x;
  }

  /// Pre-LN decoder: self-attention (unmasked or causal), cross-attention
  /// into the encoder states, FFN; final LN.
  Ref decoder_stack(Graph<S>& g, Ref x, const std::vector<std::size_t>& tgt_offs,
                    Ref enc_h, const std::vector<std::size_t>& ctx_offs,
                    bool causal, bool train, Rng* rng) const {
    AttnSpec<S> self_spec;
    self_spec.mask = causal ? AttnSpec<S>::Mask::Causal : AttnSpec<S>::Mask::Full;
    self_spec.q_offs = tgt_offs;
    self_spec.kv_offs = tgt_offs;
    AttnSpec<S> cross_spec;
    cross_spec.mask = AttnSpec<S>::Mask::Full;
    cross_spec.q_offs = tgt_offs;
    cross_spec.kv_offs = ctx_offs;
    for (const DecLayerP& l : dec_) {
      Ref xn = ln(g, l.ln1, x);
      x = g.add(x, attn_block(g, l.self, xn, xn, self_spec, train, rng));
      x = g.add(x, attn_block(g, l.cross, ln(g, l.lnc, x), enc_h, cross_spec,
                              train, rng));
      x = g.add(x, ffn_block(g, l.ffn, ln(g, l.ln2, x), train, rng));
    }
    x = ln(g, dec_final_, x);
    dec_passes_.fetch_add(1, std::memory_order_relaxed);
    return x;
  }

  /// Pre-LN joint stack with mix-attention; optionally captures the
  /// head-averaged attention map of every layer.
  Ref joint_stack(Graph<S>& g, Ref x, const std::vector<std::size_t>& offs,
                  const std::vector<std::size_t>& boundaries, bool train,
                  Rng* rng, std::vector<std::vector<Tensor<S>>>* layer_maps) const {
    AttnSpec<S> spec;
    spec.mask = AttnSpec<S>::Mask::MixTargetSource;
    spec.q_offs = offs;
    spec.kv_offs = offs;
    spec.boundaries = boundaries;
    if (layer_maps) {
      layer_maps->clear();
      layer_maps->resize(joint_.size());
    }
    std::size_t li = 0;
    for (const EncLayerP& l : joint_) {
      Ref xn = ln(g, l.ln1, x);
      x = g.add(x, attn_block(g, l.self, xn, xn, spec, train, rng,
                              layer_maps ? &(*layer_maps)[li] : nullptr));
      x = g.add(x, ffn_block(g, l.ffn, ln(g, l.ln2, x), train, rng));
      ++li;
    }
    return ln(g, joint_final_, x);
  }

  ModelKind kind_;
  ModelConfig cfg_;
  Parameter<S> embedding_;
  std::vector<EncLayerP> enc_;
  LnP enc_final_;
  Parameter<S> len_w_, len_b_;
  std::vector<DecLayerP> dec_;
  LnP dec_final_;
  std::vector<EncLayerP> joint_;
  LnP joint_final_;
  Parameter<S> mask_emb_;
  Tensor<S> pos_;
  mutable std::atomic<std::uint64_t> enc_passes_{0};
  mutable std::atomic<std::uint64_t> dec_passes_{0};
};

}  // namespace sanar
