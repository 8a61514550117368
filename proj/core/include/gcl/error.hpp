#pragma once

#include <stdexcept>
#include <string>

namespace gcl {

// Base of every error raised by the library. Each subclass maps to one
// failure family so callers (and the CLI exit-code table) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes or sequence lengths.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A parameter outside its mathematical domain (tau <= 0, h <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input data: non-finite logits, out-of-range ids, empty masks.
class InputError : public Error {
 public:
  using Error::Error;
};

// An input whose geometry makes the operation undefined (zero-norm vectors).
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

// API misuse: non-scalar backward root, schedule step past the horizon.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Invalid model, run, or file configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Dataset generation could not satisfy the layout constraints.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, int retries)
      : Error(what + " (after " + std::to_string(retries) + " retries)"),
        retries_(retries) {}

  int retries() const noexcept { return retries_; }

 private:
  int retries_;
};

}  // namespace gcl
