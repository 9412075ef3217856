#pragma once

#include <stdexcept>
#include <string>

namespace gradinv {

// Base type for all errors thrown by the library. Catching this is enough
// to contain any failure of a single run.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes incompatible with the requested operation.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value (bad enum, non-positive learning rate, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or unreadable file.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Non-finite value where a finite one is required. Carries the layer id
// when the failure happened inside a model forward pass.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg, std::string layer = {})
      : Error(layer.empty() ? msg : msg + " [layer " + layer + "]"),
        layer_(std::move(layer)) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

}  // namespace gradinv
