#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "promptgate/corpus.hpp"

namespace promptgate {

// ---- tokenizer -----------------------------------------------------------

/// A token and the byte range [begin, end) it occupies in the source text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string token;
};

/// Maximal runs of letters, digits and apostrophes, lowercased, with leading
/// and trailing apostrophes stripped. U+2019 counts as an apostrophe and is
/// normalized to '. Everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);
std::vector<TokenSpan> tokenize_spans(std::string_view text);

// ---- sparse vectors ------------------------------------------------------

struct FeatureEntry {
  std::uint32_t index = 0;
  double value = 0.0;
  bool operator==(const FeatureEntry&) const = default;
};

/// Sparse vector: entries strictly increasing by index, no explicit zeros.
struct FeatureVector {
  std::vector<FeatureEntry> entries;
  std::size_t dim = 0;

  double value_at(std::uint32_t index) const;
  double norm() const;
  bool operator==(const FeatureVector&) const = default;
};

/// Sparse view of a dense vector (zeros dropped, values unchanged).
FeatureVector from_dense(std::span<const double> values);

// ---- TF-IDF --------------------------------------------------------------

struct TfidfParams {
  std::size_t min_df = 2;
  std::optional<std::size_t> max_features = 20000;
};

/// Raw-count TF, smoothed IDF ln((1 + n_docs) / (1 + df)) + 1, L2 row norm.
class TfidfModel {
 public:
  TfidfModel() = default;

  /// Builds a model from fitted statistics. terms must be strictly increasing;
  /// throws Error(MalformedArtifact) when statistics are inconsistent.
  TfidfModel(std::vector<std::string> terms, std::vector<std::uint64_t> df, std::uint64_t n_docs);

  std::size_t dim() const noexcept { return terms_.size(); }
  std::uint64_t n_docs() const noexcept { return n_docs_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::uint64_t>& df() const noexcept { return df_; }
  const std::vector<double>& idf() const noexcept { return idf_; }

  std::optional<std::uint32_t> index_of(std::string_view term) const;

  FeatureVector transform(std::string_view text) const;

  bool operator==(const TfidfModel& other) const {
    return terms_ == other.terms_ && df_ == other.df_ && n_docs_ == other.n_docs_;
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> df_;
  std::uint64_t n_docs_ = 0;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

double smoothed_idf(std::uint64_t n_docs, std::uint64_t df);

TfidfModel fit_tfidf(std::span<const std::string> texts, const TfidfParams& params = {});
TfidfModel fit_tfidf(const Dataset& d, const TfidfParams& params = {});

// ---- precomputed embeddings ---------------------------------------------

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  /// Ids in file order.
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  /// Throws DimMismatch, MalformedRow (non-finite) or DuplicateId.
  void insert(std::string id, std::vector<double> values);

  /// Throws Error(MissingEmbedding) for unknown ids.
  const std::vector<double>& at(std::string_view id) const;
  bool contains(std::string_view id) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Format: first line `dim=<int>`, then `<id>\t<v1> <v2> ... <vdim>` per line.
EmbeddingTable parse_embeddings(std::string_view contents);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
std::string serialize_embeddings(const EmbeddingTable& table);

// ---- featurizer ----------------------------------------------------------

enum class FeatureKind { Tfidf, Embeddings };

/// Maps records to feature vectors: TF-IDF over the text, or a lookup of the
/// record id in a precomputed embedding table.
class Featurizer {
 public:
  explicit Featurizer(TfidfModel model) : source_(std::move(model)) {}
  explicit Featurizer(std::shared_ptr<const EmbeddingTable> table) : source_(std::move(table)) {}

  FeatureKind kind() const noexcept {
    return std::holds_alternative<TfidfModel>(source_) ? FeatureKind::Tfidf : FeatureKind::Embeddings;
  }
  std::size_t dim() const;
  FeatureVector featurize(const PromptRecord& record) const;
  std::vector<FeatureVector> featurize(const Dataset& d) const;

  /// Null for embedding featurizers.
  const TfidfModel* tfidf() const { return std::get_if<TfidfModel>(&source_); }

 private:
  std::variant<TfidfModel, std::shared_ptr<const EmbeddingTable>> source_;
};

}  // namespace promptgate
