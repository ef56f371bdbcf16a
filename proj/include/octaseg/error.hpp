#pragma once

#include <stdexcept>
#include <string>

namespace octaseg {

// Stable error codes. The CLI maps these onto process exit codes, so the
// assignment of a failure to a code is part of the tool's contract.
enum class ErrorCode {
  FileMissing,
  IoFailure,
  CorruptHeader,
  UnsupportedFormat,
  ShapeMismatch,
  ConfigInvalid,
  VersionMismatch,
  TruncatedFile,
  NameMismatch,
  MissingGradient,
  NumericAbort,
  EmptyInput,
  UnsupportedFilter,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::FileMissing: return "file-missing";
    case ErrorCode::IoFailure: return "io-failure";
    case ErrorCode::CorruptHeader: return "corrupt-header";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::ConfigInvalid: return "config-invalid";
    case ErrorCode::VersionMismatch: return "version-mismatch";
    case ErrorCode::TruncatedFile: return "truncated-file";
    case ErrorCode::NameMismatch: return "name-mismatch";
    case ErrorCode::MissingGradient: return "missing-gradient";
    case ErrorCode::NumericAbort: return "numeric-abort";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::UnsupportedFilter: return "unsupported-filter";
  }
  return "unknown";
}

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(error_code_name(code)) + ": " + message);
}

}  // namespace octaseg
