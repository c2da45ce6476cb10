#pragma once

#include <stdexcept>
#include <string>

namespace icrl {

// Error taxonomy shared by every module.  Each class carries a plain message;
// callers are expected to add context (file, op name, step index) at the
// throw site rather than at the catch site.

// Dimension mismatch between tensors, sequences, or tables.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaping a numeric operation, divergent training, or a
// non-invertible linear system.
class NumericsError : public std::runtime_error {
 public:
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller broke a documented precondition (bad index, missing input,
// out-of-range probability, sequence invariant violation).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed on-disk artifact: corpus line, checkpoint container, CSV.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid experiment configuration (unknown key, out-of-range value,
// inconsistent stage wiring).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage ran against missing or stale upstream artifacts.
class PipelineError : public std::runtime_error {
 public:
  explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace icrl
