#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mlod {

enum class ErrorKind {
  MissingFile,
  SizeMismatch,
  SchemaError,
  NaNInData,
  UnknownSplit,
  IncompleteGrid,
  IoFailure,
  DegenerateLogits,
  ZeroVector,
  TooFewPoints,
  DimMismatch,
  KindMismatch,
  TooFewSamples,
  ShapeMismatch,
  OddDf,
  OutOfDomain,
  EmptyPVector,
  InvalidPValue,
  BadWeights,
  UnsupportedMethod,
  EmptyInput,
  InvalidSpec,
  UnknownScenario,
  ConfigError,
};

std::string_view error_name(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it to a stable exit code and print its name.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace mlod
