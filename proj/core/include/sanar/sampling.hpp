#pragma once

// Adaptive glance sampling for two-pass parallel-decoder training.
//
// After an evaluation-mode first decode at the gold length, the trainer
// reveals ("glances") a difficulty-proportional number of gold tokens to the
// decoder for the second, gradient-carrying pass.  The budget is
// N = floor(lambda * hamming(gold, first_pass)), and with probability p the
// positions are drawn syntax-first: up to floor(N/2) keywords, floor(N/4)
// identifiers and floor(N/4) operators before uniform filling; otherwise all
// N positions are drawn uniformly without replacement.
//
// RNG discipline (pinned for reproducibility): a zero budget returns an
// empty set WITHOUT consuming the generator; otherwise exactly one uniform
// variate picks the mode, the syntax-guided branch draws its three quotas in
// keyword, identifier, operator order (each uniform on [0, cap], clamped to
// availability afterwards), and every without-replacement selection is a
// partial Fisher-Yates over the candidate pool in ascending position order.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "sanar/error.hpp"
#include "sanar/lexer.hpp"
#include "sanar/rng.hpp"

namespace sanar {

enum class GlanceMode { Random, SyntaxGuided };

/// Result of one glance draw.  `positions` are 1-based target indices,
/// sorted ascending and duplicate-free; the pick counters record how many
/// positions each syntax quota contributed (uniform filling is not counted).
struct GlanceSet {
  std::size_t budget = 0;
  std::vector<std::size_t> positions;
  std::size_t keyword_picks = 0;
  std::size_t identifier_picks = 0;
  std::size_t operator_picks = 0;
  GlanceMode mode = GlanceMode::Random;
};

/// Number of positions where the two equal-length sequences differ.
/// Throws LengthMismatch when the lengths differ.
inline std::size_t hamming_distance(const std::vector<int>& gold,
                                    const std::vector<int>& pred) {
  if (gold.size() != pred.size())
    throw LengthMismatch("hamming_distance: |gold| = " +
                         std::to_string(gold.size()) + " but |pred| = " +
                         std::to_string(pred.size()));
  std::size_t n = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) n += gold[i] != pred[i];
  return n;
}

namespace detail {

/// Moves k uniformly chosen entries (without replacement) to the front of
/// `pool` and returns them; the pool must have at least k entries.
inline std::vector<std::size_t> draw_without_replacement(
    std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rand_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  pool.erase(pool.begin(), pool.begin() + std::ptrdiff_t(k));
  return out;
}

}  // namespace detail

/// Draws the glance set for one training example.  `gold` and `pred` are
/// the gold target and the first-pass prediction at the gold length;
/// `types` carries the syntax class of each gold token.  Throws
/// LengthMismatch when the three sequences disagree in length.
inline GlanceSet glancing_sample(const std::vector<int>& gold,
                                 const std::vector<int>& pred,
                                 const std::vector<SyntaxType>& types,
                                 double lambda, double p, Rng& rng) {
  const std::size_t dis = hamming_distance(gold, pred);
  if (types.size() != gold.size())
    throw LengthMismatch("glancing_sample: |types| = " +
                         std::to_string(types.size()) + " but |gold| = " +
                         std::to_string(gold.size()));

  GlanceSet set;
  set.budget = std::size_t(lambda * double(dis));
  if (set.budget == 0) return set;  // empty draw, generator untouched

  set.mode = rand_unit(rng) < p ? GlanceMode::SyntaxGuided
                                : GlanceMode::Random;

  // Candidate pools of 1-based positions, ascending.
  std::vector<std::size_t> keywords, identifiers, operators, rest;
  for (std::size_t i = 0; i < types.size(); ++i) {
    const std::size_t pos = i + 1;
    switch (types[i]) {
      case SyntaxType::Keyword: keywords.push_back(pos); break;
      case SyntaxType::Identifier: identifiers.push_back(pos); break;
      case SyntaxType::Operator: operators.push_back(pos); break;
      default: rest.push_back(pos); break;
    }
  }

  if (set.mode == GlanceMode::SyntaxGuided) {
    auto quota = [&](std::vector<std::size_t>& pool, std::size_t cap) {
      const std::size_t drawn = rand_index(rng, cap + 1);  // uniform [0, cap]
      const std::size_t take = std::min(drawn, pool.size());
      auto picked = detail::draw_without_replacement(pool, take, rng);
      set.positions.insert(set.positions.end(), picked.begin(), picked.end());
      return take;
    };
    set.keyword_picks = quota(keywords, set.budget / 2);
    set.identifier_picks = quota(identifiers, set.budget / 4);
    set.operator_picks = quota(operators, set.budget / 4);
  }

  // Uniform fill from every still-unselected position (all syntax classes).
  std::vector<std::size_t> unselected;
  unselected.reserve(gold.size() - set.positions.size());
  for (const auto* pool : {&keywords, &identifiers, &operators, &rest})
    unselected.insert(unselected.end(), pool->begin(), pool->end());
  std::sort(unselected.begin(), unselected.end());

  const std::size_t remaining =
      std::min(set.budget - set.positions.size(), unselected.size());
  auto filled = detail::draw_without_replacement(unselected, remaining, rng);
  set.positions.insert(set.positions.end(), filled.begin(), filled.end());

  std::sort(set.positions.begin(), set.positions.end());
  return set;
}

}  // namespace sanar
