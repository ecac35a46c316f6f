#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ttpchain {

// Malformed input (JSON, word2vec text, CSV). Carries the byte offset or the
// 1-based line number when known; zero means "not applicable".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset = 0, std::size_t line = 0)
      : std::runtime_error(what), byte_offset_(byte_offset), line_(line) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t byte_offset_;
  std::size_t line_;
};

// Well-formed input that violates a domain rule (unknown technique id,
// self-pair, NULL mixed with another relation, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A bundle that yields no usable attack-pattern objects.
class EmptyCatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a precondition (mismatched lengths, layout mismatch).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace ttpchain
