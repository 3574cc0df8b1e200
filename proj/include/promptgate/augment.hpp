#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "promptgate/corpus.hpp"

namespace promptgate {

/// Translation to an intermediary language and back. Implementations report
/// failures by throwing Error(TranslatorFailure).
class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string round_trip(std::string_view text) const = 0;
};

struct RewriteRule {
  std::string from;
  std::string to;
};

/// Deterministic back-translation stand-in: applies a fixed rewrite table,
/// longest match first, case-insensitively, on whole words only. An empty
/// table makes it the identity.
class StubTranslator final : public Translator {
 public:
  explicit StubTranslator(std::vector<RewriteRule> rules);

  std::string round_trip(std::string_view text) const override;
  const std::vector<RewriteRule>& rules() const noexcept { return rules_; }

  /// Built-in contraction and simplification rewrites ("do not" -> "don't",
  /// "in order to" -> "to", ...).
  static StubTranslator with_default_rules();

 private:
  std::vector<RewriteRule> rules_;  // sorted longest `from` first
};

/// JSONL of {"from": str, "to": str}.
std::vector<RewriteRule> load_rewrite_rules(const std::filesystem::path& path);
std::vector<RewriteRule> parse_rewrite_rules(std::string_view contents);

class Thesaurus {
 public:
  Thesaurus() = default;

  /// Keys are lowercased. Throws MalformedThesaurus when a token lists
  /// itself, a synonym is not exactly one token, or a list is empty.
  explicit Thesaurus(std::map<std::string, std::vector<std::string>> entries);

  const std::vector<std::string>* find(std::string_view token) const;
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
};

/// JSONL of {"token": str, "synonyms": [str...]}.
Thesaurus load_thesaurus(const std::filesystem::path& path);
Thesaurus parse_thesaurus(std::string_view contents);

struct AugmentConfig {
  double synonym_rate = 0.1;
  std::uint64_t seed = 0;
  bool use_back_translation = true;
  std::size_t copies_per_record = 1;
};

std::string back_translate(std::string_view text, const Translator& translator);

/// Each token found in the thesaurus is replaced by its first synonym when a
/// seeded uniform draw falls below rate. One draw per eligible token, in text
/// order; everything between tokens is preserved byte for byte.
std::string synonym_replace(std::string_view text, const Thesaurus& thesaurus, double rate, std::uint64_t seed);

/// Back translation, then synonym replacement, for one record's text.
/// The per-record stream is derive_seed(seed, id), or derive_seed(seed, id#k)
/// for the k-th copy when k > 1.
std::string augment_text(std::string_view text, std::string_view record_id, std::size_t copy,
                         const AugmentConfig& cfg, const Translator& translator, const Thesaurus& thesaurus);

/// Original records followed by their augmented copies, id-suffixed "-aug"
/// ("-aug2", "-aug3", ... for extra copies). Labels, categories and source
/// carry over unchanged.
Dataset augment_dataset(const Dataset& d, const AugmentConfig& cfg, const Translator& translator,
                        const Thesaurus& thesaurus);

}  // namespace promptgate
