#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace vlmech {

// Tensor dimensions disagree with what an operation requires.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad hyperparameters, unknown names, out-of-range
// knobs. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a documented precondition or invariant. The CLI maps
// this to exit code 3.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed interchange text. `element_index` names the offending record of
// a top-level array when the failure can be attributed to one.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::optional<std::size_t> element_index = std::nullopt)
      : ValidationError(element_index ? "element " + std::to_string(*element_index) + ": " + what : what),
        element_index_(element_index) {}

  std::optional<std::size_t> element_index() const { return element_index_; }

 private:
  std::optional<std::size_t> element_index_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vlmech
