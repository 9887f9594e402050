#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sanar/error.hpp"
#include "sanar/lexer.hpp"

namespace sanar {

/// (window-line context, next-line target) pair in lexeme form.
struct ExamplePair {
  std::vector<std::string> context;
  std::vector<std::string> target;
  std::vector<SyntaxType> target_types;  // aligned with target
};

/// Dense-id vocabulary with fixed special ids 0..3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr int kLength = 3;
  static constexpr std::size_t kNumSpecials = 4;

  Vocabulary();

  /// Appends a non-special token; returns its id.  Rejects duplicates.
  int add_token(const std::string& tok);

  int encode(std::string_view tok) const;  // UNK for unknown lexemes
  const std::string& decode(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  /// FNV-1a over the id-ordered token list; checkpoint compatibility key.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Model-ready pair: ids with the length-query token prepended to context.
struct EncodedPair {
  std::vector<int> context_ids;  // [LENGTH, ...context]
  std::vector<int> target_ids;   // no EOS unless AR mode appended one
  std::vector<SyntaxType> target_types;
  int true_length = 0;  // real target token count (excludes any EOS)

  bool operator==(const EncodedPair& o) const {
    return context_ids == o.context_ids && target_ids == o.target_ids &&
           target_types == o.target_types && true_length == o.true_length;
  }
};

struct Dataset {
  std::size_t window = 0;
  std::vector<EncodedPair> pairs;
};

/// Sliding stride-1 windows: pair k = (lines [k, k+window), line k+window).
std::vector<ExamplePair> build_pairs(const LexedFile& file, std::size_t window);

/// Most-frequent lexemes (context + target counts pooled) after the four
/// specials; frequency ties break lexicographically.
Vocabulary build_vocabulary(const std::vector<ExamplePair>& pairs,
                            std::size_t max_size);

/// Left-truncates context to max_context, prepends LENGTH.  Targets longer
/// than max_target are skipped (nullopt).  AR mode appends EOS to the target
/// ids; true_length always counts real tokens only.
std::optional<EncodedPair> encode_pair(const ExamplePair& pair,
                                       const Vocabulary& vocab,
                                       std::size_t max_context,
                                       std::size_t max_target,
                                       bool ar_mode = false);

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

/// Stable file-to-split assignment: true when the filename hash lands in the
/// test bucket ([0, test_percent) of 100).
bool is_test_file(std::string_view filename, unsigned test_percent);

}  // namespace sanar
