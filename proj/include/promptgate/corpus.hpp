#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptgate {

enum class Label : std::uint8_t { Benign = 0, Jailbreak = 1 };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view text);

/// The fifteen jailbreak patterns, plus the reserved `unclassified` tag that
/// machine labeling assigns when no per-category model fires.
enum class CategoryTag : std::uint8_t {
  CharacterRoleplay,
  AssumedResponsibility,
  ResearchExperiment,
  Contrastive,
  Gameplay,
  TextContinuation,
  LogicalReasoning,
  ProgramExecution,
  Translation,
  Contradiction,
  Complexity,
  SuperiorModel,
  SudoMode,
  SimulateJailbreaking,
  EthicalAppeal,
  Unclassified,
};

enum class CategoryGroup : std::uint8_t { Pretending, AttentionShifting, PrivilegeEscalation, EthicalAppeal };

/// The fifteen pattern tags, in declaration order (excludes Unclassified).
std::span<const CategoryTag> all_pattern_tags();

/// character_roleplay, superior_model, sudo_mode, simulate_jailbreaking, ethical_appeal.
std::span<const CategoryTag> default_novel_tags();

std::string_view to_string(CategoryTag tag);
std::optional<CategoryTag> parse_category(std::string_view text);
std::string_view to_string(CategoryGroup group);

/// Top-level type of a pattern. Unclassified has no group.
std::optional<CategoryGroup> group_of(CategoryTag tag);

struct PromptRecord {
  std::string id;
  std::string text;
  Label label = Label::Benign;
  std::set<CategoryTag> categories;
  std::string source;
  bool machine_labeled = false;

  bool has_category(CategoryTag tag) const { return categories.contains(tag); }
  bool operator==(const PromptRecord&) const = default;
};

struct ClassCounts {
  std::size_t jailbreak = 0;
  std::size_t benign = 0;
  std::size_t total() const { return jailbreak + benign; }
  bool operator==(const ClassCounts&) const = default;
};

/// Validated, immutable, ingestion-ordered collection of records.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every record invariant and id uniqueness; throws Error on
  /// the first violation.
  explicit Dataset(std::vector<PromptRecord> records);

  const std::vector<PromptRecord>& records() const noexcept { return records_; }
  const ClassCounts& counts() const noexcept { return counts_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const PromptRecord& operator[](std::size_t i) const { return records_[i]; }

  auto begin() const noexcept { return records_.begin(); }
  auto end() const noexcept { return records_.end(); }

  /// Number of jailbreak records carrying tag.
  std::size_t support(CategoryTag tag) const;

  bool operator==(const Dataset& other) const { return records_ == other.records_; }

 private:
  std::vector<PromptRecord> records_;
  ClassCounts counts_;
};

enum class CorpusFormat { Jsonl, Csv };

std::optional<CorpusFormat> parse_corpus_format(std::string_view text);

Dataset load_corpus(const std::filesystem::path& path, CorpusFormat format);
Dataset parse_corpus(std::string_view contents, CorpusFormat format);

/// Serializes in the canonical corpus layout; load_corpus inverts it.
std::string serialize_corpus(const Dataset& d, CorpusFormat format);
void save_corpus(const Dataset& d, const std::filesystem::path& path, CorpusFormat format);

struct SplitSpec {
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

struct Split {
  Dataset train;
  Dataset test;
};

/// Label-stratified random split. |test| = round(test_fraction * |d|), with
/// round(test_fraction * n_jailbreak) jailbreaks and the rest benign. Both
/// sides keep ingestion order.
Split split_random(const Dataset& d, const SplitSpec& spec);

/// Leave-one-category-out split. Every jailbreak tagged `held` goes to test,
/// together with round(n_held * n_benign / n_jailbreak) seeded benign draws
/// (at least one), so the test ratio tracks the full corpus ratio.
Split split_holdout_category(const Dataset& d, CategoryTag held, std::uint64_t seed);

/// Number of benign records split_holdout_category places in test.
std::size_t holdout_benign_count(std::size_t held_jailbreaks, const ClassCounts& counts);

}  // namespace promptgate
