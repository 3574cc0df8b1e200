#include "promptgate/keywords.hpp"

#include <algorithm>
#include <cstdio>
#include <iterator>
#include <json.hpp>

#include "promptgate/error.hpp"

namespace promptgate {

std::vector<KeywordScore> extract_keywords(const Dataset& d, Label cls, const TfidfModel& model, std::size_t top_k) {
  std::size_t n_class = 0;
  // Per-term weights, summed in sorted order so the mean does not depend on
  // record order.
  std::vector<std::vector<double>> contributions(model.dim());
  for (const auto& r : d) {
    if (r.label != cls) continue;
    ++n_class;
    for (const auto& e : model.transform(r.text).entries) contributions[e.index].push_back(e.value);
  }
  if (n_class == 0) {
    throw Error(ErrorCode::EmptyClass, "keywords", "no " + std::string(to_string(cls)) + " records to score");
  }
  std::vector<KeywordScore> scores;
  scores.reserve(model.dim());
  for (std::size_t i = 0; i < model.dim(); ++i) {
    auto& values = contributions[i];
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    scores.push_back({model.terms()[i], sum / static_cast<double>(n_class), values.size()});
  }
  const auto k = std::min(top_k, scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), scores.end(),
                    [](const KeywordScore& a, const KeywordScore& b) {
                      return a.score != b.score ? a.score > b.score : a.term < b.term;
                    });
  scores.resize(k);
  return scores;
}

KeywordSets keyword_overlap(std::span<const KeywordScore> jailbreak, std::span<const KeywordScore> benign) {
  std::set<std::string> jb, bn;
  for (const auto& k : jailbreak) jb.insert(k.term);
  for (const auto& k : benign) bn.insert(k.term);
  KeywordSets out;
  std::set_difference(jb.begin(), jb.end(), bn.begin(), bn.end(), std::inserter(out.jailbreak_only, out.jailbreak_only.end()));
  std::set_intersection(jb.begin(), jb.end(), bn.begin(), bn.end(), std::inserter(out.shared, out.shared.end()));
  std::set_difference(bn.begin(), bn.end(), jb.begin(), jb.end(), std::inserter(out.benign_only, out.benign_only.end()));
  return out;
}

std::string keywords_to_csv(std::span<const KeywordScore> keywords) {
  std::string out = "term,score,class_doc_freq\n";
  char buf[64];
  for (const auto& k : keywords) {
    std::snprintf(buf, sizeof buf, "%.17g", k.score);
    // Tokens never contain commas or quotes, so no escaping is needed.
    out += k.term + "," + buf + "," + std::to_string(k.class_doc_freq) + "\n";
  }
  return out;
}

std::string overlap_to_json(const KeywordSets& sets) {
  nlohmann::ordered_json j;
  j["jailbreak_only"] = sets.jailbreak_only;
  j["shared"] = sets.shared;
  j["benign_only"] = sets.benign_only;
  return j.dump(2) + "\n";
}

}  // namespace promptgate
