#include "vpdiag/error.hpp"

namespace vpdiag {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kUnsupportedCodec: return "unsupported_codec";
    case ErrorCode::kEmptyPayload: return "empty_payload";
    case ErrorCode::kUnwritablePath: return "unwritable_path";
    case ErrorCode::kUnsupportedRate: return "unsupported_rate";
    case ErrorCode::kSpecMismatch: return "spec_mismatch";
    case ErrorCode::kRootFinding: return "root_finding";
    case ErrorCode::kConjugateSymmetry: return "conjugate_symmetry";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kUnknownId: return "unknown_id";
    case ErrorCode::kSpeakerLeakage: return "speaker_leakage";
    case ErrorCode::kDanglingPath: return "dangling_path";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kSingleClass: return "single_class";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kSplitOverlap: return "split_overlap";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kCorruptFile: return "corrupt_file";
    case ErrorCode::kFrozenPipeline: return "frozen_pipeline";
    case ErrorCode::kUnknownScenario: return "unknown_scenario";
    case ErrorCode::kForbiddenPairing: return "forbidden_pairing";
    case ErrorCode::kUnmetDependency: return "unmet_dependency";
    case ErrorCode::kRetryBudget: return "retry_budget";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

}  // namespace vpdiag
