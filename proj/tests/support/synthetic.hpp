#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "promptgate/augment.hpp"
#include "promptgate/corpus.hpp"

namespace promptgate::testing {

/// Knobs for a generated corpus. Jailbreak texts carry words from a
/// jailbreak-only marker list plus markers for each of their categories;
/// benign texts carry benign-only markers. Both draw filler from a shared
/// vocabulary, so classes are separable but not trivially by length.
struct SyntheticSpec {
  std::size_t n_records = 200;
  double jailbreak_fraction = 0.1;
  std::uint64_t seed = 1;
  std::size_t filler_words = 16;
  std::size_t marker_words = 3;
  /// Fraction of jailbreaks that receive no category (left for machine labeling).
  double uncategorized_fraction = 0.0;
  /// Fraction of categorized jailbreaks carrying a second category.
  double multi_label_fraction = 0.1;
  /// Tags cycled over categorized jailbreaks; empty means every pattern tag.
  std::vector<CategoryTag> tags;
};

Dataset make_synthetic(const SyntheticSpec& spec);

/// Word pools the generator draws from.
const std::vector<std::string>& filler_vocabulary();
const std::vector<std::string>& jailbreak_markers();
const std::vector<std::string>& benign_markers();
/// Marker word unique to a category, e.g. "sudomodecue".
std::string category_marker(CategoryTag tag);

/// Hand-built record helpers.
PromptRecord jailbreak(std::string id, std::string text, std::vector<CategoryTag> tags = {});
PromptRecord benign(std::string id, std::string text);

/// Thesaurus from a brace list without the map/copy constructor ambiguity.
inline Thesaurus make_thesaurus(std::map<std::string, std::vector<std::string>> entries) {
  return Thesaurus(std::move(entries));
}

/// Removes its directory tree on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace promptgate::testing
