#include "mlod/error.hpp"

namespace mlod {

std::string_view error_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::NaNInData: return "NaNInData";
    case ErrorKind::UnknownSplit: return "UnknownSplit";
    case ErrorKind::IncompleteGrid: return "IncompleteGrid";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::DegenerateLogits: return "DegenerateLogits";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::KindMismatch: return "KindMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::OddDf: return "OddDf";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::EmptyPVector: return "EmptyPVector";
    case ErrorKind::InvalidPValue: return "InvalidPValue";
    case ErrorKind::BadWeights: return "BadWeights";
    case ErrorKind::UnsupportedMethod: return "UnsupportedMethod";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::UnknownScenario: return "UnknownScenario";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_name(kind)) + ": " + message), kind_(kind) {}

}  // namespace mlod
