#include "sanar/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "json.hpp"

namespace sanar {

namespace {

using nlohmann::json;

constexpr const char* kSpecialNames[] = {"[PAD]", "[UNK]", "[EOS]", "[LENGTH]"};

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* name : kSpecialNames) add_token(name);
}

int Vocabulary::add_token(const std::string& tok) {
  auto [it, inserted] = token_to_id_.emplace(tok, int(id_to_token_.size()));
  if (!inserted) throw Error("vocabulary: duplicate token: " + tok);
  id_to_token_.push_back(tok);
  return it->second;
}

int Vocabulary::encode(std::string_view tok) const {
  auto it = token_to_id_.find(std::string(tok));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(int id) const {
  if (id < 0 || std::size_t(id) >= id_to_token_.size())
    throw Error("vocabulary: id out of range: " + std::to_string(id));
  return id_to_token_[std::size_t(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& t : id_to_token_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  return h;
}

std::vector<ExamplePair> build_pairs(const LexedFile& file, std::size_t window) {
  if (window < 1) throw Error("build_pairs: window must be >= 1");
  std::vector<ExamplePair> out;
  const auto& lines = file.lines;
  if (lines.size() <= window) return out;
  out.reserve(lines.size() - window);
  for (std::size_t k = 0; k + window < lines.size(); ++k) {
    ExamplePair p;
    for (std::size_t l = k; l < k + window; ++l)
      for (const Token& t : lines[l]) p.context.push_back(t.text);
    for (const Token& t : lines[k + window]) {
      p.target.push_back(t.text);
      p.target_types.push_back(t.stype);
    }
    out.push_back(std::move(p));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<ExamplePair>& pairs,
                            std::size_t max_size) {
  if (max_size <= Vocabulary::kNumSpecials)
    throw Error("build_vocabulary: max_size must exceed the special count");
  // std::map keeps tokens sorted, which settles frequency ties lexicographically.
  std::map<std::string, std::size_t> counts;
  for (const ExamplePair& p : pairs) {
    for (const std::string& t : p.context) ++counts[t];
    for (const std::string& t : p.target) ++counts[t];
  }
  if (counts.empty()) throw EmptyCorpus("build_vocabulary: no tokens");

  std::vector<std::pair<std::string_view, std::size_t>> by_freq(counts.begin(),
                                                                counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  const std::size_t room = max_size - Vocabulary::kNumSpecials;
  for (std::size_t i = 0; i < by_freq.size() && i < room; ++i)
    v.add_token(std::string(by_freq[i].first));
  return v;
}

std::optional<EncodedPair> encode_pair(const ExamplePair& pair,
                                       const Vocabulary& vocab,
                                       std::size_t max_context,
                                       std::size_t max_target, bool ar_mode) {
  if (pair.target.empty() || pair.target.size() != pair.target_types.size())
    throw Error("encode_pair: malformed pair");
  if (pair.target.size() > max_target) return std::nullopt;

  EncodedPair e;
  e.context_ids.push_back(Vocabulary::kLength);
  const std::size_t keep = std::min(pair.context.size(), max_context);
  for (std::size_t i = pair.context.size() - keep; i < pair.context.size(); ++i)
    e.context_ids.push_back(vocab.encode(pair.context[i]));
  for (const std::string& t : pair.target)
    e.target_ids.push_back(vocab.encode(t));
  e.target_types = pair.target_types;
  e.true_length = int(pair.target.size());
  if (ar_mode) e.target_ids.push_back(Vocabulary::kEos);
  return e;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  json header = {{"format_version", 1}, {"window", ds.window}};
  out << header.dump() << "\n";
  for (const EncodedPair& p : ds.pairs) {
    json rec;
    rec["ctx"] = p.context_ids;
    rec["tgt"] = p.target_ids;
    json typ = json::array();
    for (SyntaxType t : p.target_types) typ.push_back(to_string(t));
    rec["typ"] = std::move(typ);
    rec["len"] = p.true_length;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw FormatVersionMismatch("dataset has no header: " + path);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatVersionMismatch("dataset header is not JSON: " + path);
  }
  if (!header.contains("format_version") || header["format_version"] != 1)
    throw FormatVersionMismatch("unsupported dataset format_version in " + path);

  Dataset ds;
  ds.window = header.value("window", std::size_t(0));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("bad dataset record in " + path + ": " + e.what());
    }
    EncodedPair p;
    p.context_ids = rec.at("ctx").get<std::vector<int>>();
    p.target_ids = rec.at("tgt").get<std::vector<int>>();
    for (const auto& s : rec.at("typ"))
      p.target_types.push_back(syntax_type_from_string(s.get<std::string>()));
    p.true_length = rec.at("len").get<int>();
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  json j;
  j["version"] = 1;
  j["specials"] = {{"PAD", Vocabulary::kPad},
                   {"UNK", Vocabulary::kUnk},
                   {"EOS", Vocabulary::kEos},
                   {"LENGTH", Vocabulary::kLength}};
  json toks = json::array();
  for (std::size_t i = Vocabulary::kNumSpecials; i < vocab.size(); ++i)
    toks.push_back(vocab.decode(int(i)));
  j["tokens"] = std::move(toks);
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed: " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("bad vocabulary file " + path + ": " + e.what());
  }
  if (!j.contains("version") || j["version"] != 1)
    throw FormatVersionMismatch("unsupported vocabulary version in " + path);
  Vocabulary v;
  for (const auto& t : j.at("tokens")) v.add_token(t.get<std::string>());
  return v;
}

bool is_test_file(std::string_view filename, unsigned test_percent) {
  return fnv1a(filename) % 100 < test_percent;
}

}  // namespace sanar
