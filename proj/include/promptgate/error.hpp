#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptgate {

enum class ErrorCode {
  // corpus
  MalformedRecord,
  DuplicateId,
  BenignWithCategories,
  EmptyCorpus,
  DegenerateSplit,
  EmptyHoldout,
  InsufficientBenign,
  InvalidArgument,
  Io,
  // augment
  TranslatorFailure,
  MalformedThesaurus,
  // features
  EmptyVocabulary,
  DimMismatch,
  MalformedRow,
  MissingEmbedding,
  // models
  SingleClassData,
  DimensionMismatch,
  InsufficientSupport,
  MalformedArtifact,
  // eval
  LengthMismatch,
  EmptyCounts,
  SingleClassLabels,
  // keywords
  EmptyClass,
  // service
  ArtifactLoadFailure,
  BindFailure,
};

std::string_view to_string(ErrorCode code);

/// Module-prefixed failure. what() reads "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string_view module, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string module_;
  std::string message_;
};

}  // namespace promptgate
