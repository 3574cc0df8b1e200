#include "promptgate/error.hpp"

namespace promptgate {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::BenignWithCategories: return "BenignWithCategories";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::EmptyHoldout: return "EmptyHoldout";
    case ErrorCode::InsufficientBenign: return "InsufficientBenign";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::TranslatorFailure: return "TranslatorFailure";
    case ErrorCode::MalformedThesaurus: return "MalformedThesaurus";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientSupport: return "InsufficientSupport";
    case ErrorCode::MalformedArtifact: return "MalformedArtifact";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyCounts: return "EmptyCounts";
    case ErrorCode::SingleClassLabels: return "SingleClassLabels";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ArtifactLoadFailure: return "ArtifactLoadFailure";
    case ErrorCode::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string_view module, const std::string& message)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) + ": " + message),
      code_(code),
      module_(module),
      message_(message) {}

}  // namespace promptgate
