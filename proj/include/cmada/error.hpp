#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmada {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Raised when a training loop produces a non-finite loss.
struct TrainingError : Error {
  TrainingError(const std::string& what, std::int64_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step(step) {}
  std::int64_t step;
};

struct MissingArtifactError : Error {
  explicit MissingArtifactError(const std::string& artifact)
      : Error("missing artifact: " + artifact), artifact(artifact) {}
  std::string artifact;
};

}  // namespace cmada
