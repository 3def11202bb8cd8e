#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace egosync {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// skeleton
struct DegenerateSkeleton : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct EmptySequence : Error { using Error::Error; };

// manifests and pair mining
struct ParseError : Error { using Error::Error; };
struct DuplicateId : Error { using Error::Error; };
struct InvalidShiftRange : Error { using Error::Error; };

// frame stacks
struct WindowOutOfRange : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };

// network / training
struct BatchMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };

// transfer
struct ClipTooShort : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// analysis
struct DegenerateInput : Error { using Error::Error; };
struct InsufficientSamples : Error { using Error::Error; };

// io / configuration / pipeline
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct MissingArtifact : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };

/// Non-fatal diagnostics go to stderr; recoverable conditions (e.g. a
/// zero-variance channel) warn instead of throwing.
inline void log_warning(const std::string& msg) {
  std::fprintf(stderr, "[egosync] warning: %s\n", msg.c_str());
}

}  // namespace egosync
