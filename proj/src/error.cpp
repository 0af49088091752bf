#include "propweight/error.hpp"

namespace propweight {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownLevel: return "UnknownLevel";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::DegenerateFeatures: return "DegenerateFeatures";
    case ErrorKind::UnsupportedForProposedVariance: return "UnsupportedForProposedVariance";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::ExtremeWeights: return "ExtremeWeights";
    case ErrorKind::AllReplicatesFailed: return "AllReplicatesFailed";
    case ErrorKind::InsufficientReplicates: return "InsufficientReplicates";
  }
  return "Unknown";
}

}  // namespace propweight
