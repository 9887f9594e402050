#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sanar {

/// Deterministic python-like corpus: a cycle of distinct lines where each
/// line has exactly one successor, so next-line completion is learnable to
/// 100% EM.  Line lengths cycle through `lengths`, which gives the latency
/// benchmark its target-length buckets.
struct SyntheticSpec {
  std::size_t cycle_lines = 48;
  std::size_t repeats = 5;                    // cycle repetitions per file
  std::vector<std::size_t> lengths = {5, 10, 20};
  std::size_t file_index = 0;                 // namespaces identifiers per file
};

/// Tokens of cycle line i (each exactly lengths[i % lengths.size()] long).
std::vector<std::string> synthetic_line_tokens(const SyntheticSpec& spec,
                                               std::size_t i);

/// Full file text: the cycle repeated, one space-joined line per text line.
std::string synthetic_source(const SyntheticSpec& spec);

}  // namespace sanar
