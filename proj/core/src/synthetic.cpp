#include "sanar/synthetic.hpp"

#include "sanar/error.hpp"

namespace sanar {

std::vector<std::string> synthetic_line_tokens(const SyntheticSpec& spec,
                                               std::size_t i) {
  if (spec.lengths.empty()) throw Error("synthetic: lengths must be non-empty");
  const std::size_t len = spec.lengths[i % spec.lengths.size()];
  if (len < 5) throw Error("synthetic: line length must be >= 5");
  const std::string tag = std::to_string(spec.file_index) + "x" + std::to_string(i);

  std::vector<std::string> toks = {"v" + tag, "=", "fn" + tag, "(", ")"};
  std::size_t rest = len - 5;
  if (rest % 2 == 1) {
    toks.insert(toks.begin() + 4, "a" + tag);
    --rest;
  }
  for (std::size_t j = 0; j < rest / 2; ++j) {
    toks.push_back("+");
    toks.push_back("p" + std::to_string(j));  // shared pad names across lines
  }
  return toks;
}

std::string synthetic_source(const SyntheticSpec& spec) {
  if (spec.cycle_lines < 2) throw Error("synthetic: need at least 2 cycle lines");
  std::string out;
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    for (std::size_t i = 0; i < spec.cycle_lines; ++i) {
      const auto toks = synthetic_line_tokens(spec, i);
      for (std::size_t t = 0; t < toks.size(); ++t) {
        if (t) out += ' ';
        out += toks[t];
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace sanar
