// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace statute {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1; ConfigError maps to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("input contains no article marker") {}
};

class MalformedHeader : public Error {
 public:
  explicit MalformedHeader(std::size_t line_no)
      : Error("malformed structural header at line " + std::to_string(line_no)),
        line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateArticle : public Error {
 public:
  explicit DuplicateArticle(const std::string& id) : Error("duplicate article " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class UnparsableMarker : public Error {
 public:
  explicit UnparsableMarker(const std::string& text) : Error("unparsable article marker: " + text) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what, std::size_t line = 0)
      : Error(line ? "schema error at line " + std::to_string(line) + ": " + what
                   : "schema error: " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  LengthMismatch() : Error("part and query lengths differ") {}
};

class EmptyQuery : public Error {
 public:
  EmptyQuery() : Error("query is empty after normalization") {}
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("corpus has no articles") {}
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t expected, std::size_t got)
      : Error("vector dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(got)) {}
};

class UnknownArticleId : public Error {
 public:
  explicit UnknownArticleId(const std::string& id) : Error("unknown article id " + id) {}
};

class ModelUnavailable : public Error {
 public:
  explicit ModelUnavailable(const std::string& why) : Error("model unavailable: " + why) {}
};

class BudgetExhausted : public Error {
 public:
  BudgetExhausted() : Error("context budget cannot hold a single article") {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace statute
