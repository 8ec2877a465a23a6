#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nlqual {

enum class ErrorCode {
  ParseError,
  SchemaError,
  DimMismatch,
  EvalError,
  NotACone,
  DimensionTooLarge,
  DomainError,
  PhiInfinite,
  Unsupported,
  UnsupportedRegion,
  UnsupportedStructure,
  HypothesisViolated,
  ProjectionFailure,
  Precondition,
  CapReached,
  PivotLimit,
};

inline std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::SchemaError: return "SCHEMA_ERROR";
    case ErrorCode::DimMismatch: return "DIM_MISMATCH";
    case ErrorCode::EvalError: return "EVAL_ERROR";
    case ErrorCode::NotACone: return "NOT_A_CONE";
    case ErrorCode::DimensionTooLarge: return "DIMENSION_TOO_LARGE";
    case ErrorCode::DomainError: return "DOMAIN_ERROR";
    case ErrorCode::PhiInfinite: return "PHI_INFINITE";
    case ErrorCode::Unsupported: return "UNSUPPORTED";
    case ErrorCode::UnsupportedRegion: return "UNSUPPORTED_REGION";
    case ErrorCode::UnsupportedStructure: return "UNSUPPORTED_STRUCTURE";
    case ErrorCode::HypothesisViolated: return "HYPOTHESIS_VIOLATED";
    case ErrorCode::ProjectionFailure: return "PROJECTION_FAILURE";
    case ErrorCode::Precondition: return "PRECONDITION";
    case ErrorCode::CapReached: return "CAP_REACHED";
    case ErrorCode::PivotLimit: return "PIVOT_LIMIT";
  }
  return "UNKNOWN_ERROR";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nlqual
