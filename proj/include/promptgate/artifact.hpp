#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "promptgate/features.hpp"
#include "promptgate/models.hpp"

namespace promptgate {

inline constexpr int kArtifactFormatVersion = 1;

/// A binary classifier plus what it needs to featurize text.
///
/// On disk: {"format_version": 1, "kind": "linear"|"ensemble",
///           "features": "tfidf"|"embeddings", "tfidf": {vocabulary, df, n_docs}
///           (tfidf only), "embedding_dim": n (embeddings only), "params": ...}
struct ModelArtifact {
  /// Absent for embedding artifacts until an EmbeddingTable is attached.
  std::optional<Featurizer> featurizer;
  FeatureKind feature_kind = FeatureKind::Tfidf;
  BinaryModel model;
  /// "<kind>-<16 hex digits of FNV-1a over the serialized artifact>".
  std::string version;

  /// Probability for raw text; requires a TF-IDF featurizer.
  double score_text(std::string_view text) const;
  double score(const PromptRecord& record) const;
};

std::string serialize_model(const Featurizer& featurizer, const BinaryModel& model);
ModelArtifact parse_model(std::string_view json);
ModelArtifact load_model(const std::filesystem::path& path);

/// {"format_version": 1, "kind": "one_vs_all", "tfidf": ..., "params":
///  {"threshold": t, "thresholds": {...}, "models": {tag: {"kind", "params"}},
///   "skipped": [...]}}. Only TF-IDF featurizers serialize.
std::string serialize_one_vs_all(const OneVsAllClassifier& c);
OneVsAllClassifier parse_one_vs_all(std::string_view json);
OneVsAllClassifier load_one_vs_all(const std::filesystem::path& path);

std::string artifact_version(std::string_view kind, std::string_view serialized);

}  // namespace promptgate
