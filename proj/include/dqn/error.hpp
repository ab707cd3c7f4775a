#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dqn {

enum class ErrorCode {
  InvalidArgument,
  UnserviceableJob,
  NoCounts,
  EmptySample,
  ZeroTotal,
  MissingStream,
  BudgetExhaustedBeforeInit,
  EmptyPosterior,
  MissingColumn,
  BadValue,
  EmptyFile,
  OverlappingIntervals,
  NegativeCount,
  DuplicateCell,
  VersionMismatch,
  UnknownFlightId,
  UnknownRosterInterval,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnserviceableJob: return "UnserviceableJob";
    case ErrorCode::NoCounts: return "NoCounts";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::ZeroTotal: return "ZeroTotal";
    case ErrorCode::MissingStream: return "MissingStream";
    case ErrorCode::BudgetExhaustedBeforeInit: return "BudgetExhaustedBeforeInit";
    case ErrorCode::EmptyPosterior: return "EmptyPosterior";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::BadValue: return "BadValue";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::OverlappingIntervals: return "OverlappingIntervals";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::UnknownFlightId: return "UnknownFlightId";
    case ErrorCode::UnknownRosterInterval: return "UnknownRosterInterval";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code is stable and machine
/// readable; the message carries file/row/field context where there is any.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace dqn
