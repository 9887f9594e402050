#include "sanar/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace sanar {

namespace {

// Python reserved words (True/False/None are reserved, so they classify as
// Keyword here; see the vocabulary of soft keywords for what is excluded).
const std::unordered_set<std::string_view> kPythonKeywords = {
    "False",  "None",   "True",    "and",    "as",     "assert", "async",
    "await",  "break",  "class",   "continue", "def",  "del",    "elif",
    "else",   "except", "finally", "for",    "from",   "global", "if",
    "import", "in",     "is",      "lambda", "nonlocal", "not",  "or",
    "pass",   "raise",  "return",  "try",    "while",  "with",   "yield"};

// Java SE reserved words per the language specification keyword list.
// true/false/null are literals in that list, handled separately below.
const std::unordered_set<std::string_view> kJavaKeywords = {
    "abstract", "assert",   "boolean",  "break",      "byte",    "case",
    "catch",    "char",     "class",    "const",      "continue", "default",
    "do",       "double",   "else",     "enum",       "extends", "final",
    "finally",  "float",    "for",      "goto",       "if",      "implements",
    "import",   "instanceof", "int",    "interface",  "long",    "native",
    "new",      "package",  "private",  "protected",  "public",  "return",
    "short",    "static",   "strictfp", "super",      "switch",  "synchronized",
    "this",     "throw",    "throws",   "transient",  "try",     "void",
    "volatile", "while",    "_"};

const std::unordered_set<std::string_view> kJavaWordLiterals = {"true", "false",
                                                                "null"};

struct Punct {
  std::string_view text;
  SyntaxType type;
};

// Longest-match tables, longest lexemes first.
const std::array<Punct, 46> kPythonPunct = {{
    {"**=", SyntaxType::Operator}, {"//=", SyntaxType::Operator},
    {">>=", SyntaxType::Operator}, {"<<=", SyntaxType::Operator},
    {"**", SyntaxType::Operator},  {"//", SyntaxType::Operator},
    {"<<", SyntaxType::Operator},  {">>", SyntaxType::Operator},
    {"<=", SyntaxType::Operator},  {">=", SyntaxType::Operator},
    {"==", SyntaxType::Operator},  {"!=", SyntaxType::Operator},
    {"->", SyntaxType::Operator},  {":=", SyntaxType::Operator},
    {"+=", SyntaxType::Operator},  {"-=", SyntaxType::Operator},
    {"*=", SyntaxType::Operator},  {"/=", SyntaxType::Operator},
    {"%=", SyntaxType::Operator},  {"@=", SyntaxType::Operator},
    {"&=", SyntaxType::Operator},  {"|=", SyntaxType::Operator},
    {"^=", SyntaxType::Operator},  {"+", SyntaxType::Operator},
    {"-", SyntaxType::Operator},   {"*", SyntaxType::Operator},
    {"/", SyntaxType::Operator},   {"%", SyntaxType::Operator},
    {"@", SyntaxType::Operator},   {"&", SyntaxType::Operator},
    {"|", SyntaxType::Operator},   {"^", SyntaxType::Operator},
    {"~", SyntaxType::Operator},   {"<", SyntaxType::Operator},
    {">", SyntaxType::Operator},   {"=", SyntaxType::Operator},
    {"(", SyntaxType::Separator},  {")", SyntaxType::Separator},
    {"[", SyntaxType::Separator},  {"]", SyntaxType::Separator},
    {"{", SyntaxType::Separator},  {"}", SyntaxType::Separator},
    {",", SyntaxType::Separator},  {":", SyntaxType::Separator},
    {".", SyntaxType::Separator},  {";", SyntaxType::Separator},
}};

const std::array<Punct, 50> kJavaPunct = {{
    {">>>=", SyntaxType::Operator}, {"...", SyntaxType::Separator},
    {">>>", SyntaxType::Operator},  {"<<=", SyntaxType::Operator},
    {">>=", SyntaxType::Operator},  {"::", SyntaxType::Separator},
    {"==", SyntaxType::Operator},   {"<=", SyntaxType::Operator},
    {">=", SyntaxType::Operator},   {"!=", SyntaxType::Operator},
    {"&&", SyntaxType::Operator},   {"||", SyntaxType::Operator},
    {"++", SyntaxType::Operator},   {"--", SyntaxType::Operator},
    {"+=", SyntaxType::Operator},   {"-=", SyntaxType::Operator},
    {"*=", SyntaxType::Operator},   {"/=", SyntaxType::Operator},
    {"&=", SyntaxType::Operator},   {"|=", SyntaxType::Operator},
    {"^=", SyntaxType::Operator},   {"%=", SyntaxType::Operator},
    {"<<", SyntaxType::Operator},   {">>", SyntaxType::Operator},
    {"->", SyntaxType::Operator},   {"=", SyntaxType::Operator},
    {">", SyntaxType::Operator},    {"<", SyntaxType::Operator},
    {"!", SyntaxType::Operator},    {"~", SyntaxType::Operator},
    {"?", SyntaxType::Operator},    {":", SyntaxType::Operator},
    {"+", SyntaxType::Operator},    {"-", SyntaxType::Operator},
    {"*", SyntaxType::Operator},    {"/", SyntaxType::Operator},
    {"&", SyntaxType::Operator},    {"|", SyntaxType::Operator},
    {"^", SyntaxType::Operator},    {"%", SyntaxType::Operator},
    {"(", SyntaxType::Separator},   {")", SyntaxType::Separator},
    {"{", SyntaxType::Separator},   {"}", SyntaxType::Separator},
    {"[", SyntaxType::Separator},   {"]", SyntaxType::Separator},
    {";", SyntaxType::Separator},   {",", SyntaxType::Separator},
    {".", SyntaxType::Separator},   {"@", SyntaxType::Separator},
}};

bool is_word_start(char c, Language lang) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
         (lang == Language::JavaLike && c == '$');
}

bool is_word_char(char c, Language lang) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
         (lang == Language::JavaLike && c == '$');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_hex_digit(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

const Punct* match_punct(std::string_view rest, Language lang) {
  auto scan = [&](const auto& table) -> const Punct* {
    for (const auto& p : table) {
      if (p.text.empty()) continue;
      if (rest.substr(0, p.text.size()) == p.text) return &p;
    }
    return nullptr;
  };
  return lang == Language::PythonLike ? scan(kPythonPunct) : scan(kJavaPunct);
}

// Scans a numeric literal starting at pos; returns its length.
std::size_t scan_number(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  if (s[i] == '0' && i + 1 < s.size() &&
      (s[i + 1] == 'x' || s[i + 1] == 'X' || s[i + 1] == 'b' ||
       s[i + 1] == 'B')) {
    i += 2;
    while (i < s.size() && (is_hex_digit(s[i]) || s[i] == '_')) ++i;
  } else {
    if (s[i] == '.') {
      ++i;
    } else {
      while (i < s.size() && (is_digit(s[i]) || s[i] == '_')) ++i;
      // "1." is a float unless it starts an ellipsis-like run "1..".
      if (i < s.size() && s[i] == '.' &&
          !(i + 1 < s.size() && s[i + 1] == '.'))
        ++i;
    }
    while (i < s.size() && (is_digit(s[i]) || s[i] == '_')) ++i;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
      if (j < s.size() && is_digit(s[j])) {
        i = j;
        while (i < s.size() && is_digit(s[i])) ++i;
      }
    }
  }
  // Type suffixes: 1L, 2.0f, 3j and friends.
  while (i < s.size() &&
         (s[i] == 'l' || s[i] == 'L' || s[i] == 'f' || s[i] == 'F' ||
          s[i] == 'd' || s[i] == 'D' || s[i] == 'j' || s[i] == 'J'))
    ++i;
  return i - pos;
}

// Scans a quoted string starting at pos (which holds the quote character).
// Returns length, or 0 if unterminated on this line.  Python triple quotes
// are handled only when they close on the same line.
std::size_t scan_string(std::string_view s, std::size_t pos, Language lang) {
  const char q = s[pos];
  if (lang == Language::PythonLike && pos + 2 < s.size() && s[pos + 1] == q &&
      s[pos + 2] == q) {
    // Triple-quoted; only closes on the same line (multi-line docstrings are
    // a documented limitation of the line-oriented lexer).
    std::size_t j = pos + 3;
    while (j < s.size()) {
      if (s[j] == '\\') {
        j += 2;
        continue;
      }
      if (j + 3 <= s.size() && s[j] == q && s[j + 1] == q && s[j + 2] == q)
        return j + 3 - pos;
      ++j;
    }
    return 0;
  }
  std::size_t i = pos + 1;
  while (i < s.size()) {
    if (s[i] == '\\') {
      i += 2;
      continue;
    }
    if (s[i] == q) return i + 1 - pos;
    ++i;
  }
  return 0;
}

}  // namespace

const char* to_string(SyntaxType t) {
  switch (t) {
    case SyntaxType::Keyword: return "keyword";
    case SyntaxType::Identifier: return "identifier";
    case SyntaxType::Operator: return "operator";
    case SyntaxType::Literal: return "literal";
    case SyntaxType::Separator: return "separator";
    case SyntaxType::Other: return "other";
  }
  return "other";
}

SyntaxType syntax_type_from_string(std::string_view s) {
  if (s == "keyword") return SyntaxType::Keyword;
  if (s == "identifier") return SyntaxType::Identifier;
  if (s == "operator") return SyntaxType::Operator;
  if (s == "literal") return SyntaxType::Literal;
  if (s == "separator") return SyntaxType::Separator;
  if (s == "other") return SyntaxType::Other;
  throw ParseError("unknown syntax type: " + std::string(s));
}

const char* to_string(Language l) {
  return l == Language::PythonLike ? "python" : "java";
}

Language language_from_string(std::string_view s) {
  if (s == "python") return Language::PythonLike;
  if (s == "java") return Language::JavaLike;
  throw UnsupportedLanguage("unsupported language: " + std::string(s));
}

SyntaxType syntax_type_of(std::string_view lexeme, Language lang) {
  if (lexeme.empty()) return SyntaxType::Other;
  if (lang == Language::PythonLike) {
    if (kPythonKeywords.count(lexeme)) return SyntaxType::Keyword;
  } else if (lang == Language::JavaLike) {
    if (kJavaKeywords.count(lexeme)) return SyntaxType::Keyword;
    if (kJavaWordLiterals.count(lexeme)) return SyntaxType::Literal;
  } else {
    throw UnsupportedLanguage("unsupported language enum value");
  }
  const char c0 = lexeme[0];
  if (c0 == '"' || c0 == '\'') return SyntaxType::Literal;
  if (is_digit(c0) || (c0 == '.' && lexeme.size() > 1 && is_digit(lexeme[1])))
    return SyntaxType::Literal;
  if (is_word_start(c0, lang)) {
    bool word = true;
    for (char c : lexeme)
      if (!is_word_char(c, lang)) { word = false; break; }
    if (word) return SyntaxType::Identifier;
  }
  if (const Punct* p = match_punct(lexeme, lang);
      p && p->text.size() == lexeme.size())
    return p->type;
  return SyntaxType::Other;
}

LexedFile lex(std::string_view source, Language lang, bool lenient) {
  if (lang != Language::PythonLike && lang != Language::JavaLike)
    throw UnsupportedLanguage("unsupported language enum value");

  LexedFile out;
  out.language = lang;
  bool in_block_comment = false;  // JavaLike /* ... */ state across lines

  std::size_t line_start = 0;
  int line_no = 0;
  while (line_start <= source.size()) {
    if (line_start == source.size() && line_no > 0) break;
    std::size_t eol = source.find('\n', line_start);
    if (eol == std::string_view::npos) eol = source.size();
    std::string_view line = source.substr(line_start, eol - line_start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;

    std::vector<Token> tokens;
    bool skip_line = false;
    std::size_t i = 0;
    while (i < line.size()) {
      if (in_block_comment) {
        std::size_t close = line.find("*/", i);
        if (close == std::string_view::npos) { i = line.size(); break; }
        in_block_comment = false;
        i = close + 2;
        continue;
      }
      const char c = line[i];
      if (c == ' ' || c == '\t' || c == '\f' || c == '\v') { ++i; continue; }
      if (lang == Language::PythonLike && c == '#') break;  // comment to EOL
      if (lang == Language::JavaLike && c == '/' && i + 1 < line.size()) {
        if (line[i + 1] == '/') break;
        if (line[i + 1] == '*') {
          in_block_comment = true;
          i += 2;
          continue;
        }
      }
      if (c == '"' || c == '\'') {
        const std::size_t len = scan_string(line, i, lang);
        if (len == 0) {
          if (!lenient)
            throw UnterminatedString(
                line_no, "line " + std::to_string(line_no) +
                             ": unterminated string literal");
          out.warnings.push_back("line " + std::to_string(line_no) +
                                 ": unterminated string literal, line skipped");
          skip_line = true;
          break;
        }
        tokens.push_back({std::string(line.substr(i, len)), SyntaxType::Literal,
                          line_no});
        i += len;
        continue;
      }
      if (is_digit(c) || (c == '.' && i + 1 < line.size() && is_digit(line[i + 1]))) {
        const std::size_t len = scan_number(line, i);
        tokens.push_back({std::string(line.substr(i, len)), SyntaxType::Literal,
                          line_no});
        i += len;
        continue;
      }
      if (is_word_start(c, lang)) {
        std::size_t j = i + 1;
        while (j < line.size() && is_word_char(line[j], lang)) ++j;
        std::string_view word = line.substr(i, j - i);
        tokens.push_back({std::string(word), syntax_type_of(word, lang), line_no});
        i = j;
        continue;
      }
      if (const Punct* p = match_punct(line.substr(i), lang)) {
        tokens.push_back({std::string(p->text), p->type, line_no});
        i += p->text.size();
        continue;
      }
      // Unclassifiable byte; keep it as a single-character Other token.
      tokens.push_back({std::string(1, c), SyntaxType::Other, line_no});
      ++i;
    }
    if (!skip_line && !tokens.empty()) out.lines.push_back(std::move(tokens));
    line_start = eol + 1;
    if (eol == source.size()) break;
  }
  return out;
}

}  // namespace sanar
