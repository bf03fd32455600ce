#pragma once

#include <stdexcept>
#include <string>

namespace respoof {

/// Caller handed in something that violates a documented precondition.
struct RejectedInput : std::invalid_argument {
  explicit RejectedInput(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Experiment configuration is malformed (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A required on-disk artifact is absent (CLI exit code 3).
struct MissingArtifact : std::runtime_error {
  explicit MissingArtifact(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace respoof
