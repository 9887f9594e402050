#include "sanar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "sanar/error.hpp"

namespace sanar {

bool exact_match(const std::vector<std::string>& pred,
                 const std::vector<std::string>& gold) {
  return pred == gold;
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

double edit_similarity(const std::string& pred, const std::string& gold) {
  if (pred.empty() && gold.empty())
    throw BothEmpty("edit_similarity: both strings empty");
  const std::size_t n = gold.size();
  std::vector<std::size_t> dp(n + 1);
  for (std::size_t j = 0; j <= n; ++j) dp[j] = j;
  for (std::size_t i = 1; i <= pred.size(); ++i) {
    std::size_t prev = dp[0];
    dp[0] = i;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t cur = dp[j];
      dp[j] = std::min({dp[j] + 1, dp[j - 1] + 1,
                        prev + (pred[i - 1] != gold[j - 1] ? 1 : 0)});
      prev = cur;
    }
  }
  return 1.0 - double(dp[n]) / double(pred.size() + gold.size());
}

namespace {

// n-gram counts; the map key is the token range flattened with separators.
std::map<std::vector<std::string>, std::size_t> ngram_counts(
    const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

double bleu(const std::vector<std::string>& pred,
            const std::vector<std::string>& gold) {
  if (pred.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto pc = ngram_counts(pred, n);
    const auto gc = ngram_counts(gold, n);
    std::size_t match = 0;
    for (const auto& [gram, count] : pc) {
      auto it = gc.find(gram);
      if (it != gc.end()) match += std::min(count, it->second);
    }
    const std::size_t total = pred.size() >= n ? pred.size() - n + 1 : 0;
    double p;
    if (n == 1) {
      if (match == 0) return 0.0;
      p = double(match) / double(total);
    } else {
      p = double(match + 1) / double(total + 1);
    }
    log_sum += 0.25 * std::log(p);
  }
  const double bp = pred.size() >= gold.size()
                        ? 1.0
                        : std::exp(1.0 - double(gold.size()) / double(pred.size()));
  return 100.0 * bp * std::exp(log_sum);
}

double repetition_ratio(const std::vector<std::vector<std::string>>& preds,
                        RepeatDef def) {
  std::size_t repeats = 0, total = 0;
  for (const auto& p : preds) {
    total += p.size();
    if (def == RepeatDef::Consecutive) {
      for (std::size_t t = 1; t < p.size(); ++t)
        if (p[t] == p[t - 1]) ++repeats;
    } else {
      std::unordered_set<std::string> seen;
      for (const auto& tok : p) {
        if (!seen.insert(tok).second) ++repeats;
      }
    }
  }
  if (total == 0) throw EmptyTestSet("repetition_ratio: no predictions");
  return double(repeats) / double(total);
}

}  // namespace sanar
