#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "promptgate/corpus.hpp"
#include "promptgate/features.hpp"

namespace promptgate {

struct KeywordScore {
  std::string term;
  double score = 0.0;               // mean TF-IDF weight over the class's records
  std::size_t class_doc_freq = 0;   // class records containing the term
  bool operator==(const KeywordScore&) const = default;
};

struct KeywordSets {
  std::set<std::string> jailbreak_only;
  std::set<std::string> shared;
  std::set<std::string> benign_only;
};

/// Class-discriminative keywords: every vocabulary term scored by its mean
/// TF-IDF weight across records of `cls`, sorted by score descending then
/// term ascending, truncated to top_k. Terms never seen in the class score 0
/// and sort last.
std::vector<KeywordScore> extract_keywords(const Dataset& d, Label cls, const TfidfModel& model, std::size_t top_k);

KeywordSets keyword_overlap(std::span<const KeywordScore> jailbreak, std::span<const KeywordScore> benign);

/// `term,score,class_doc_freq` with a header row.
std::string keywords_to_csv(std::span<const KeywordScore> keywords);
/// {"jailbreak_only": [...], "shared": [...], "benign_only": [...]}
std::string overlap_to_json(const KeywordSets& sets);

}  // namespace promptgate
