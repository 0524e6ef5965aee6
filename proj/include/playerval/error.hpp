#pragma once

#include <stdexcept>
#include <string>

namespace playerval {

enum class ErrorCode {
  // user / configuration
  Config,
  BadK,
  UnknownFeature,
  RowOutOfRange,
  TooManyFeatures,
  // data
  MissingColumn,
  MalformedRow,
  EmptyResult,
  DegenerateSplit,
  NonPositiveInput,
  DegenerateInput,
  OutOfDomain,
  ShapeMismatch,
  TooFewRows,
  ZeroVariance,
  SchemaMismatch,
  MissingCover,
  Io,
  // propagated from a nested fit
  ModelFitFailure,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return "Config";
    case ErrorCode::BadK: return "BadK";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::RowOutOfRange: return "RowOutOfRange";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::NonPositiveInput: return "NonPositiveInput";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::MissingCover: return "MissingCover";
    case ErrorCode::Io: return "Io";
    case ErrorCode::ModelFitFailure: return "ModelFitFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Process exit status: 1 user/config error, 2 data error.
inline int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::BadK:
    case ErrorCode::UnknownFeature:
    case ErrorCode::RowOutOfRange:
    case ErrorCode::TooManyFeatures:
      return 1;
    default:
      return 2;
  }
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace playerval
