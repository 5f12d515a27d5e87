#include "memo/error.hpp"

namespace memo {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax: return "syntax";
    case ErrorCode::kUnknownSkill: return "unknown_skill";
    case ErrorCode::kArityMismatch: return "arity_mismatch";
    case ErrorCode::kKindMismatch: return "kind_mismatch";
    case ErrorCode::kMissingObject: return "missing_object";
    case ErrorCode::kMissingParam: return "missing_param";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kUnknownId: return "unknown_id";
    case ErrorCode::kCorruptRecord: return "corrupt_record";
    case ErrorCode::kEmbedderMismatch: return "embedder_mismatch";
    case ErrorCode::kEmbeddingUnavailable: return "embedding_unavailable";
    case ErrorCode::kFixtureMissing: return "fixture_missing";
    case ErrorCode::kReplayExhausted: return "replay_exhausted";
    case ErrorCode::kReplayMismatch: return "replay_mismatch";
    case ErrorCode::kModelTimeout: return "model_timeout";
    case ErrorCode::kModelUnavailable: return "model_unavailable";
    case ErrorCode::kUnknownCheckpoint: return "unknown_checkpoint";
    case ErrorCode::kUnknownPredicate: return "unknown_predicate";
    case ErrorCode::kUnknownTask: return "unknown_task";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kBusy: return "busy";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kIo); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace memo
