#pragma once

#include <string>
#include <vector>

namespace sanar {

/// Summary metrics for one evaluation run.
struct EvalReport {
  double em = 0.0;                // exact-match fraction, [0,1]
  double bleu = 0.0;              // mean sentence BLEU-4 in [0,100]
  double es = 0.0;                // mean character edit similarity, [0,1]
  double repetition_ratio = 0.0;  // [0,1]
  double mean_latency_ns = 0.0;
  double speedup_vs_ar = 0.0;     // mean(AR latency) / mean(NAR latency)
};

bool exact_match(const std::vector<std::string>& pred,
                 const std::vector<std::string>& gold);

/// Single-space detokenization used by all string-level metrics.
std::string join_tokens(const std::vector<std::string>& toks);

/// ES = 1 − Levenshtein(pred, gold) / (|pred| + |gold|), character level.
/// Throws BothEmpty when both strings are empty.
double edit_similarity(const std::string& pred, const std::string& gold);

/// Sentence BLEU-4: clipped n-gram precisions, +1 smoothing on n >= 2 only,
/// brevity penalty; 0 when no unigram matches.  Corpus score = mean over
/// sentences.
double bleu(const std::vector<std::string>& pred,
            const std::vector<std::string>& gold);

enum class RepeatDef { Consecutive, Any };

/// Fraction of predicted tokens that repeat an earlier token of the same
/// prediction; Consecutive counts y_t == y_{t-1}, Any counts any earlier
/// duplicate.  Denominator = all pooled tokens.
double repetition_ratio(const std::vector<std::vector<std::string>>& preds,
                        RepeatDef def = RepeatDef::Consecutive);

}  // namespace sanar
