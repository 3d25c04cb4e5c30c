#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relaff {

// Root of every error raised by the library. Callers that only need to
// report a failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated (wrong count, reused graph, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN or otherwise non-finite numbers reached an operation that refuses them.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Value outside its declared range (labels, probabilities, ...).
class RangeError : public Error {
 public:
  using Error::Error;
};

// A configuration document failed validation. `field` is the dotted path of
// the offending key, e.g. "head.C".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A row whose norm is too small to define a cosine.
class DegenerateVectorError : public Error {
 public:
  DegenerateVectorError(std::size_t row, const std::string& what)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// A statistic is 0/0 for the given input (e.g. CCC of two equal constants).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Reading or writing an on-disk artifact failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace relaff
