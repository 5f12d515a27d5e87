#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace memo {

enum class ErrorCode {
  kSyntax,
  kUnknownSkill,
  kArityMismatch,
  kKindMismatch,
  kMissingObject,
  kMissingParam,
  kDimensionMismatch,
  kDuplicateId,
  kUnknownId,
  kCorruptRecord,
  kEmbedderMismatch,
  kEmbeddingUnavailable,
  kFixtureMissing,
  kReplayExhausted,
  kReplayMismatch,
  kModelTimeout,
  kModelUnavailable,
  kUnknownCheckpoint,
  kUnknownPredicate,
  kUnknownTask,
  kInvalidArgument,
  kBusy,
  kIo,
};

std::string_view to_string(ErrorCode code);
/// Inverse of to_string; nullopt for unknown names.
std::optional<ErrorCode> error_code_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memo
