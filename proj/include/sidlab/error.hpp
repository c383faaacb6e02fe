#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sidlab {

enum class ErrorKind {
  kDomain,
  kDimensionMismatch,
  kInvalidDistribution,
  kStateSpaceTooLarge,
  kMaskLabelPresent,
  kAcceptanceRateTooLow,
  kDivergence,
  kMaskResidue,
  kUndefinedCritic,
  kMissingModel,
  kConfigParse,
  kFormat,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries one of the error classes above so
// the CLI can report a stable diagnostic and exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDomain: return "domain-error";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kInvalidDistribution: return "invalid-distribution";
    case ErrorKind::kStateSpaceTooLarge: return "state-space-too-large";
    case ErrorKind::kMaskLabelPresent: return "mask-label-present";
    case ErrorKind::kAcceptanceRateTooLow: return "acceptance-rate-too-low";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kMaskResidue: return "mask-residue";
    case ErrorKind::kUndefinedCritic: return "undefined-critic";
    case ErrorKind::kMissingModel: return "missing-model";
    case ErrorKind::kConfigParse: return "config-parse";
    case ErrorKind::kFormat: return "format-error";
  }
  return "error";
}

}  // namespace sidlab
