#pragma once

#include <stdexcept>
#include <string>

namespace sg {

// Shape or length disagreement between operands.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid or inconsistent run/model configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced where a finite one is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stream protocol violation (out-of-order or gapped input).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (call sequencing that the type forbids).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Persisted artifact failed its integrity check.
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Input data violates a documented invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure distinct from content-level errors.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sg
