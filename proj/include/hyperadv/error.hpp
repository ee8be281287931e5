#pragma once

#include <stdexcept>
#include <string>

namespace hyperadv {

/// Category attached to every error raised by the library so callers can
/// branch without parsing messages.
enum class ErrorKind {
  kDimensionMismatch,
  kCurvatureMismatch,
  kDomain,
  kNumericalDegeneracy,
  kShape,
  kContract,
  kFormat,
  kValidation,
  kDegenerateBase,
  kDivergence,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kCurvatureMismatch: return "curvature mismatch";
    case ErrorKind::kDomain: return "domain error";
    case ErrorKind::kNumericalDegeneracy: return "numerical degeneracy";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kContract: return "contract violation";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kDegenerateBase: return "degenerate base";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io error";
  }
  return "error";
}

}  // namespace hyperadv
