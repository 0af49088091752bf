#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace propweight {

// Stable error taxonomy. The string form of each kind is part of the CLI's
// machine-readable error output and must not change.
enum class ErrorKind {
  ConfigError,
  IoError,
  UnknownColumn,
  ParseError,
  UnknownLevel,
  EmptyResult,
  SchemaMismatch,
  InvalidArgument,
  DimensionMismatch,
  Separation,
  RankDeficient,
  NotConverged,
  Infeasible,
  DegenerateFeatures,
  UnsupportedForProposedVariance,
  SingularMatrix,
  NotPSD,
  ExtremeWeights,
  AllReplicatesFailed,
  InsufficientReplicates,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace propweight
