#pragma once

#include <stdexcept>
#include <string>

namespace tlsrec {

/// Base for all library errors. `error_class()` is a stable, machine-parsable
/// tag; the CLI prints failures as "<class>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& message)
      : std::runtime_error(message), class_(std::move(cls)) {}

  const std::string& error_class() const { return class_; }

 private:
  std::string class_;
};

/// Operand shapes are incompatible (names both shapes in the message).
struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("dimension-error", m) {}
};

/// A softmax row has every entry masked out.
struct InvalidMaskError : Error {
  explicit InvalidMaskError(const std::string& m) : Error("invalid-mask-error", m) {}
};

/// A caller violated an operation's precondition.
struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error("contract-error", m) {}
};

/// Malformed input text (message carries the line number).
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse-error", m) {}
};

/// An id is outside its valid range.
struct IndexError : Error {
  explicit IndexError(const std::string& m) : Error("index-error", m) {}
};

/// Interactions are out of time order where order is required.
struct DataError : Error {
  explicit DataError(const std::string& m) : Error("data-error", m) {}
};

/// Bad or inconsistent configuration.
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config-error", m) {}
};

/// File could not be read or written (message carries the path).
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io-error", m) {}
};

/// A selector matched nothing.
struct LookupError : Error {
  explicit LookupError(const std::string& m) : Error("lookup-error", m) {}
};

/// Optimization produced a non-finite loss (message carries the batch and
/// parameter norms).
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& m) : Error("divergence-error", m) {}
};

}  // namespace tlsrec
