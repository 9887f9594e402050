#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sanar/error.hpp"

namespace sanar {

enum class Language { PythonLike, JavaLike };

/// Coarse syntax classes.  Keyword, Identifier and Operator are the three
/// classes the syntax-guided sampler draws quotas from; the rest are never
/// quota-sampled.
enum class SyntaxType { Keyword, Identifier, Operator, Literal, Separator, Other };

const char* to_string(SyntaxType t);
SyntaxType syntax_type_from_string(std::string_view s);

const char* to_string(Language l);
Language language_from_string(std::string_view s);

struct Token {
  std::string text;   // exact lexeme, never empty, no newlines
  SyntaxType stype = SyntaxType::Other;
  int line_no = 0;    // 1-based physical source line
};

struct LexedFile {
  Language language = Language::PythonLike;
  std::vector<std::vector<Token>> lines;  // one entry per non-empty logical line
  std::vector<std::string> warnings;      // lenient-mode diagnostics
};

/// Classifies a standalone lexeme.  Keywords take precedence over the
/// identifier rule; anything unclassifiable falls through to Other.
SyntaxType syntax_type_of(std::string_view lexeme, Language lang);

/// Tokenizes source text into logical lines.  Blank and comment-only lines
/// are dropped.  Logical lines are physical lines after comment stripping;
/// implicit line joining is not implemented.  In lenient mode a line with an
/// unterminated string literal is skipped and reported in warnings; in
/// strict mode it throws UnterminatedString.
LexedFile lex(std::string_view source, Language lang, bool lenient = true);

}  // namespace sanar
