#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace windguard {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a precondition (sizes, ranges, empty input).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input outside a function's mathematical domain (e.g. zero-magnitude vector).
class DomainError : public Error {
 public:
  using Error::Error;
};

// System is missing something it needs to run (thresholds, dictionary).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Remote service failed. Transport errors are retryable.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, bool retryable = false)
      : Error(what), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class TransportError : public ProviderError {
 public:
  explicit TransportError(const std::string& what) : ProviderError(what, true) {}
};

// Failure while filling a matrix, carrying the offending pair.
class PairwiseError : public Error {
 public:
  PairwiseError(std::size_t row, std::size_t col, const std::string& what)
      : Error("(" + std::to_string(row) + ", " + std::to_string(col) + "): " + what),
        row_(row),
        col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

// One record of a batch failed to embed; carries its index.
class EmbeddingFailure : public Error {
 public:
  EmbeddingFailure(std::size_t index, const std::string& what, bool from_provider = false)
      : Error("record " + std::to_string(index) + ": " + what), index_(index), from_provider_(from_provider) {}

  std::size_t index() const noexcept { return index_; }
  // True when the provider itself failed (as opposed to bad record data).
  bool from_provider() const noexcept { return from_provider_; }

 private:
  std::size_t index_;
  bool from_provider_;
};

}  // namespace windguard
