#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace robofi {

enum class ErrorCode {
  // core-types
  UnknownLabel,
  InvalidSample,
  // ingest
  BadMagic,
  TruncatedPacket,
  BadSubcarrierCount,
  GapTooLarge,
  InsufficientDuration,
  UnknownAdapter,
  // preprocess
  MaskOutOfRange,
  UnsupportedRate,
  StatsShapeMismatch,
  InconsistentMetadata,
  // autodiff
  ShapeMismatch,
  ProbabilityOutOfRange,
  GraphConsumed,
  NonScalarOutput,
  HeadDivisibility,
  // models
  TooManyPatches,
  NonFiniteLogits,
  // train-eval
  EmptySplit,
  DivergedLoss,
  TooSmall,
  MissingVelocity,
  MissingLocation,
  LengthMismatch,
  // synth
  InvalidGeometry,
  // plumbing
  InvalidConfig,
  Io,
  Format,
};

std::string_view error_code_name(ErrorCode code);

/// True for errors caused by bad inputs or configuration (CLI exit code 1),
/// false for failures while running (exit code 2).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace robofi
