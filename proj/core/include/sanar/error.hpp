#pragma once

#include <stdexcept>
#include <string>

namespace sanar {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

class UnterminatedString : public Error {
 public:
  UnterminatedString(int line_no, const std::string& what)
      : Error(what), line_no(line_no) {}
  int line_no;
};

class UnsupportedLanguage : public Error {
 public:
  explicit UnsupportedLanguage(const std::string& what) : Error(what) {}
};

class EmptyCorpus : public Error {
 public:
  explicit EmptyCorpus(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

class FormatVersionMismatch : public Error {
 public:
  explicit FormatVersionMismatch(const std::string& what) : Error(what) {}
};

class ContextTooLong : public Error {
 public:
  explicit ContextTooLong(const std::string& what) : Error(what) {}
};

class GlancePositionOutOfRange : public Error {
 public:
  explicit GlancePositionOutOfRange(const std::string& what) : Error(what) {}
};

class AllPositionsMasked : public Error {
 public:
  explicit AllPositionsMasked(const std::string& what) : Error(what) {}
};

class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& what) : Error(what) {}
};

class EmptyTestSet : public Error {
 public:
  explicit EmptyTestSet(const std::string& what) : Error(what) {}
};

class BothEmpty : public Error {
 public:
  explicit BothEmpty(const std::string& what) : Error(what) {}
};

class DegenerateRow : public Error {
 public:
  explicit DegenerateRow(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

class UnknownKey : public Error {
 public:
  explicit UnknownKey(const std::string& what) : Error(what) {}
};

}  // namespace sanar
