#include "promptgate/augment.hpp"

#include <algorithm>
#include <json.hpp>

#include "promptgate/error.hpp"
#include "promptgate/features.hpp"
#include "promptgate/io.hpp"
#include "promptgate/rng.hpp"
#include "promptgate/text.hpp"

namespace promptgate {

namespace {

constexpr std::string_view kModule = "augment";

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '\'' || c >= 0x80;
}

bool iequals_at(std::string_view text, std::size_t pos, std::string_view needle) {
  if (pos + needle.size() > text.size()) return false;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    char a = text[pos + i], b = needle[i];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (b >= 'A' && b <= 'Z') b = static_cast<char>(b - 'A' + 'a');
    if (a != b) return false;
  }
  return true;
}

template <typename Fn>
void for_each_jsonl_object(std::string_view s, std::string_view what, Fn&& fn) {
  std::size_t pos = 0, line_no = 0;
  while (pos < s.size()) {
    auto eol = s.find('\n', pos);
    if (eol == std::string_view::npos) eol = s.size();
    auto line = s.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedThesaurus, kModule,
                  std::string(what) + " line " + std::to_string(line_no) + ": " + e.what());
    }
    fn(obj, line_no);
  }
}

}  // namespace

StubTranslator::StubTranslator(std::vector<RewriteRule> rules) : rules_(std::move(rules)) {
  std::erase_if(rules_, [](const RewriteRule& r) { return r.from.empty(); });
  std::stable_sort(rules_.begin(), rules_.end(),
                   [](const RewriteRule& a, const RewriteRule& b) { return a.from.size() > b.from.size(); });
}

std::string StubTranslator::round_trip(std::string_view text) const {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const bool at_boundary = pos == 0 || !is_word_byte(static_cast<unsigned char>(text[pos - 1]));
    if (at_boundary) {
      const RewriteRule* hit = nullptr;
      for (const auto& rule : rules_) {
        if (!iequals_at(text, pos, rule.from)) continue;
        const auto end = pos + rule.from.size();
        if (end < text.size() && is_word_byte(static_cast<unsigned char>(text[end]))) continue;
        hit = &rule;
        break;
      }
      if (hit) {
        out += hit->to;
        pos += hit->from.size();
        continue;
      }
    }
    out.push_back(text[pos++]);
  }
  return out;
}

StubTranslator StubTranslator::with_default_rules() {
  return StubTranslator({
      {"do not", "don't"},
      {"does not", "doesn't"},
      {"did not", "didn't"},
      {"cannot", "can't"},
      {"can not", "can't"},
      {"will not", "won't"},
      {"would not", "wouldn't"},
      {"should not", "shouldn't"},
      {"is not", "isn't"},
      {"are not", "aren't"},
      {"i am", "i'm"},
      {"you are", "you're"},
      {"it is", "it's"},
      {"that is", "that's"},
      {"in order to", "to"},
      {"from now on", "now"},
      {"at this point in time", "now"},
      {"is able to", "can"},
      {"are able to", "can"},
  });
}

std::vector<RewriteRule> parse_rewrite_rules(std::string_view contents) {
  std::vector<RewriteRule> rules;
  for_each_jsonl_object(contents, "rewrite table", [&](const nlohmann::json& obj, std::size_t line) {
    if (!obj.is_object() || !obj.contains("from") || !obj.contains("to") || !obj["from"].is_string() ||
        !obj["to"].is_string()) {
      throw Error(ErrorCode::MalformedThesaurus, kModule,
                  "rewrite table line " + std::to_string(line) + ": expected {\"from\": str, \"to\": str}");
    }
    rules.push_back({obj["from"].get<std::string>(), obj["to"].get<std::string>()});
  });
  return rules;
}

std::vector<RewriteRule> load_rewrite_rules(const std::filesystem::path& path) {
  return parse_rewrite_rules(io::read_file(path));
}

Thesaurus::Thesaurus(std::map<std::string, std::vector<std::string>> entries) {
  for (auto& [key, synonyms] : entries) {
    auto toks = tokenize(key);
    if (toks.size() != 1) {
      throw Error(ErrorCode::MalformedThesaurus, kModule, "key '" + key + "' is not a single token");
    }
    if (synonyms.empty()) throw Error(ErrorCode::MalformedThesaurus, kModule, "token '" + key + "' has no synonyms");
    for (const auto& syn : synonyms) {
      auto syn_toks = tokenize(syn);
      if (syn_toks.size() != 1) {
        throw Error(ErrorCode::MalformedThesaurus, kModule,
                    "synonym '" + syn + "' of '" + key + "' is not a single token");
      }
      if (syn_toks[0] == toks[0]) {
        throw Error(ErrorCode::MalformedThesaurus, kModule, "token '" + key + "' lists itself as a synonym");
      }
    }
    auto [it, inserted] = entries_.emplace(toks[0], std::move(synonyms));
    if (!inserted) throw Error(ErrorCode::MalformedThesaurus, kModule, "token '" + key + "' listed twice");
  }
}

const std::vector<std::string>* Thesaurus::find(std::string_view token) const {
  auto it = entries_.find(token);
  return it == entries_.end() ? nullptr : &it->second;
}

Thesaurus parse_thesaurus(std::string_view contents) {
  std::map<std::string, std::vector<std::string>> entries;
  for_each_jsonl_object(contents, "thesaurus", [&](const nlohmann::json& obj, std::size_t line) {
    const auto where = "thesaurus line " + std::to_string(line);
    if (!obj.is_object() || !obj.contains("token") || !obj["token"].is_string() || !obj.contains("synonyms") ||
        !obj["synonyms"].is_array()) {
      throw Error(ErrorCode::MalformedThesaurus, kModule, where + ": expected {\"token\": str, \"synonyms\": [str]}");
    }
    std::vector<std::string> syns;
    for (const auto& s : obj["synonyms"]) {
      if (!s.is_string()) throw Error(ErrorCode::MalformedThesaurus, kModule, where + ": synonyms must be strings");
      syns.push_back(s.get<std::string>());
    }
    auto key = obj["token"].get<std::string>();
    if (entries.contains(key)) throw Error(ErrorCode::MalformedThesaurus, kModule, where + ": duplicate token");
    entries.emplace(std::move(key), std::move(syns));
  });
  return Thesaurus(std::move(entries));
}

Thesaurus load_thesaurus(const std::filesystem::path& path) { return parse_thesaurus(io::read_file(path)); }

std::string back_translate(std::string_view text, const Translator& translator) {
  return translator.round_trip(text);
}

std::string synonym_replace(std::string_view text, const Thesaurus& thesaurus, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, kModule, "synonym rate must lie in [0, 1]");
  if (thesaurus.empty() || rate == 0.0) return std::string(text);
  Rng rng(seed);
  std::string out;
  out.reserve(text.size());
  std::size_t copied = 0;
  for (const auto& span : tokenize_spans(text)) {
    const auto* synonyms = thesaurus.find(span.token);
    if (!synonyms) continue;
    if (!(rng.uniform_unit() < rate)) continue;
    out.append(text.substr(copied, span.begin - copied));
    out += synonyms->front();
    copied = span.end;
  }
  out.append(text.substr(copied));
  return out;
}

std::string augment_text(std::string_view text, std::string_view record_id, std::size_t copy,
                         const AugmentConfig& cfg, const Translator& translator, const Thesaurus& thesaurus) {
  std::string out = cfg.use_back_translation ? back_translate(text, translator) : std::string(text);
  const auto stream = copy <= 1 ? derive_seed(cfg.seed, record_id)
                                : derive_seed(cfg.seed, std::string(record_id) + "#" + std::to_string(copy));
  return synonym_replace(out, thesaurus, cfg.synonym_rate, stream);
}

Dataset augment_dataset(const Dataset& d, const AugmentConfig& cfg, const Translator& translator,
                        const Thesaurus& thesaurus) {
  std::vector<PromptRecord> out(d.records());
  out.reserve(d.size() * (1 + cfg.copies_per_record));
  for (std::size_t copy = 1; copy <= cfg.copies_per_record; ++copy) {
    const std::string suffix = copy == 1 ? "-aug" : "-aug" + std::to_string(copy);
    for (const auto& r : d) {
      PromptRecord aug = r;
      aug.id = r.id + suffix;
      try {
        aug.text = augment_text(r.text, r.id, copy, cfg, translator, thesaurus);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TranslatorFailure) throw;
        throw Error(ErrorCode::TranslatorFailure, kModule, "record '" + r.id + "': " + e.message());
      }
      // A rewrite can in principle empty a short prompt; keep the original then.
      if (text::trim(aug.text).empty()) aug.text = r.text;
      out.push_back(std::move(aug));
    }
  }
  return Dataset(std::move(out));
}

}  // namespace promptgate
