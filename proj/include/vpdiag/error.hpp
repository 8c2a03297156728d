#pragma once

#include <stdexcept>
#include <string>

namespace vpdiag {

enum class ErrorCode {
  kMissingFile,
  kUnsupportedCodec,
  kEmptyPayload,
  kUnwritablePath,
  kUnsupportedRate,
  kSpecMismatch,
  kRootFinding,
  kConjugateSymmetry,
  kSchema,
  kDuplicateId,
  kUnknownId,
  kSpeakerLeakage,
  kDanglingPath,
  kEmptyInput,
  kSingleClass,
  kDimensionMismatch,
  kSplitOverlap,
  kVersionMismatch,
  kCorruptFile,
  kFrozenPipeline,
  kUnknownScenario,
  kForbiddenPairing,
  kUnmetDependency,
  kRetryBudget,
  kInvalidArgument,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-checkable code. Every module throws this;
/// the CLI maps codes onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vpdiag
