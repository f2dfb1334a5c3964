#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace samkd {

enum class ErrorKind {
  InvalidDimension,
  InvalidRegion,
  InvalidHyperparameter,
  InvalidShape,
  NumericInput,
  InvalidSpec,
  Divergence,
  Io,
  Config,
  Incompatible,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidRegion: return "invalid-region";
    case ErrorKind::InvalidHyperparameter: return "invalid-hyperparameter";
    case ErrorKind::InvalidShape: return "invalid-shape";
    case ErrorKind::NumericInput: return "numeric-input";
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
    case ErrorKind::Config: return "config";
    case ErrorKind::Incompatible: return "incompatible";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind; the
/// CLI prints it as the first token of its one-line error report.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace samkd
