#pragma once

#include <stdexcept>
#include <string>

namespace plotforge {

// Root of every error the library throws. The CLI prints `what()` as a
// single "error: <kind>: <message>" line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

// Out-of-range token id, row index or position.
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& message) : Error("index", message) {}
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message) : Error("contract", message) {}
};

// Sequence longer than the model's positional table.
class LengthError : public Error {
 public:
  explicit LengthError(const std::string& message) : Error("length", message) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("training", message) {}
};

// Malformed, truncated or version-mismatched files.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& message) : Error("load", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

}  // namespace plotforge
