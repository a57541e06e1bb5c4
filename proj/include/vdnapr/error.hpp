#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vdnapr {

enum class ErrorKind {
  SpecMismatch,
  InvalidActivation,
  CalibrationEmpty,
  ShapeError,
  FormatError,
  GraphError,
  SelectionError,
  TrainingDataError,
  EmptyDatabase,
  IoError,
  ConfigError,
};

constexpr std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SpecMismatch: return "SpecMismatch";
    case ErrorKind::InvalidActivation: return "InvalidActivation";
    case ErrorKind::CalibrationEmpty: return "CalibrationEmpty";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::GraphError: return "GraphError";
    case ErrorKind::SelectionError: return "SelectionError";
    case ErrorKind::TrainingDataError: return "TrainingDataError";
    case ErrorKind::EmptyDatabase: return "EmptyDatabase";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Error";
}

/// Every domain failure in the library surfaces as this exception; `kind()`
/// carries the category the CLI reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace vdnapr
