#include "srp/error.hpp"

namespace srp {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedLineCount: return "malformed-line-count";
    case ErrorKind::kMalformedCharacter: return "malformed-character";
    case ErrorKind::kRaggedRows: return "ragged-rows";
    case ErrorKind::kSizeMismatch: return "size-mismatch";
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kGridTooSmall: return "grid-too-small";
    case ErrorKind::kMissingCtmEntry: return "missing-ctm-entry";
    case ErrorKind::kParseError: return "parse-error";
    case ErrorKind::kIncompleteCoverage: return "incomplete-coverage";
    case ErrorKind::kStateSpaceTooLarge: return "state-space-too-large";
    case ErrorKind::kNoConvergence: return "no-convergence";
    case ErrorKind::kZeroEvidence: return "zero-evidence";
    case ErrorKind::kSupportMismatch: return "support-mismatch";
    case ErrorKind::kBackendFailure: return "backend-failure";
    case ErrorKind::kValidationFailure: return "validation-failure";
    case ErrorKind::kTransportError: return "transport-error";
    case ErrorKind::kParseFailure: return "parse-failure";
    case ErrorKind::kTooFewBoards: return "too-few-boards";
    case ErrorKind::kZeroPooledVariance: return "zero-pooled-variance";
    case ErrorKind::kUnbalancedDesign: return "unbalanced-design";
    case ErrorKind::kDegenerateVariance: return "degenerate-variance";
    case ErrorKind::kConstantTarget: return "constant-target";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kNoEligibleChain: return "no-eligible-chain";
    case ErrorKind::kSessionExhausted: return "session-exhausted";
    case ErrorKind::kLeaseExpired: return "lease-expired";
    case ErrorKind::kWrongPayloadType: return "wrong-payload-type";
    case ErrorKind::kTooFast: return "too-fast";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kIoError: return "io-error";
  }
  return "unknown";
}

}  // namespace srp
