#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace srp {

// Every failure surfaced by the library carries one of these kinds so that
// callers (CLI, HTTP service, Python bindings) can map it without string
// matching.
enum class ErrorKind {
  kMalformedLineCount,
  kMalformedCharacter,
  kRaggedRows,
  kSizeMismatch,
  kInvalidArgument,
  kGridTooSmall,
  kMissingCtmEntry,
  kParseError,
  kIncompleteCoverage,
  kStateSpaceTooLarge,
  kNoConvergence,
  kZeroEvidence,
  kSupportMismatch,
  kBackendFailure,
  kValidationFailure,
  kTransportError,
  kParseFailure,
  kTooFewBoards,
  kZeroPooledVariance,
  kUnbalancedDesign,
  kDegenerateVariance,
  kConstantTarget,
  kDimensionMismatch,
  kNoEligibleChain,
  kSessionExhausted,
  kLeaseExpired,
  kWrongPayloadType,
  kTooFast,
  kNotFound,
  kIoError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace srp
