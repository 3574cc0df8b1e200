#include "promptgate/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <json.hpp>
#include <unordered_set>

#include "promptgate/error.hpp"
#include "promptgate/io.hpp"
#include "promptgate/rng.hpp"
#include "promptgate/text.hpp"

namespace promptgate {

namespace {

constexpr std::string_view kModule = "corpus";

struct TagInfo {
  CategoryTag tag;
  std::string_view name;
  std::optional<CategoryGroup> group;
};

constexpr std::array<TagInfo, 16> kTags{{
    {CategoryTag::CharacterRoleplay, "character_roleplay", CategoryGroup::Pretending},
    {CategoryTag::AssumedResponsibility, "assumed_responsibility", CategoryGroup::Pretending},
    {CategoryTag::ResearchExperiment, "research_experiment", CategoryGroup::Pretending},
    {CategoryTag::Contrastive, "contrastive", CategoryGroup::Pretending},
    {CategoryTag::Gameplay, "gameplay", CategoryGroup::Pretending},
    {CategoryTag::TextContinuation, "text_continuation", CategoryGroup::AttentionShifting},
    {CategoryTag::LogicalReasoning, "logical_reasoning", CategoryGroup::AttentionShifting},
    {CategoryTag::ProgramExecution, "program_execution", CategoryGroup::AttentionShifting},
    {CategoryTag::Translation, "translation", CategoryGroup::AttentionShifting},
    {CategoryTag::Contradiction, "contradiction", CategoryGroup::AttentionShifting},
    {CategoryTag::Complexity, "complexity", CategoryGroup::AttentionShifting},
    {CategoryTag::SuperiorModel, "superior_model", CategoryGroup::PrivilegeEscalation},
    {CategoryTag::SudoMode, "sudo_mode", CategoryGroup::PrivilegeEscalation},
    {CategoryTag::SimulateJailbreaking, "simulate_jailbreaking", CategoryGroup::PrivilegeEscalation},
    {CategoryTag::EthicalAppeal, "ethical_appeal", CategoryGroup::EthicalAppeal},
    {CategoryTag::Unclassified, "unclassified", std::nullopt},
}};

constexpr std::array<CategoryTag, 15> kPatternTags{
    CategoryTag::CharacterRoleplay,    CategoryTag::AssumedResponsibility, CategoryTag::ResearchExperiment,
    CategoryTag::Contrastive,          CategoryTag::Gameplay,              CategoryTag::TextContinuation,
    CategoryTag::LogicalReasoning,     CategoryTag::ProgramExecution,      CategoryTag::Translation,
    CategoryTag::Contradiction,        CategoryTag::Complexity,            CategoryTag::SuperiorModel,
    CategoryTag::SudoMode,             CategoryTag::SimulateJailbreaking,  CategoryTag::EthicalAppeal,
};

constexpr std::array<CategoryTag, 5> kNovelTags{
    CategoryTag::CharacterRoleplay, CategoryTag::SuperiorModel, CategoryTag::SudoMode,
    CategoryTag::SimulateJailbreaking, CategoryTag::EthicalAppeal,
};

[[noreturn]] void malformed(std::size_t line, const std::string& reason) {
  throw Error(ErrorCode::MalformedRecord, kModule, "line " + std::to_string(line) + ": " + reason);
}

// ---- CSV ----------------------------------------------------------------

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

// RFC 4180 reader: quoted fields may contain commas, doubled quotes, and newlines.
std::vector<CsvRow> read_csv(std::string_view s) {
  std::vector<CsvRow> rows;
  std::size_t pos = 0;
  std::size_t line = 1;
  while (pos < s.size()) {
    CsvRow row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool row_done = false;
    while (!row_done) {
      if (pos >= s.size()) {
        if (in_quotes) malformed(row.line, "unterminated quoted field");
        row.fields.push_back(std::move(field));
        break;
      }
      const char c = s[pos++];
      if (in_quotes) {
        if (c == '"') {
          if (pos < s.size() && s[pos] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
        }
        continue;
      }
      switch (c) {
        case '"':
          if (!field.empty() || field_was_quoted) malformed(line, "stray quote inside unquoted field");
          in_quotes = true;
          field_was_quoted = true;
          break;
        case ',':
          row.fields.push_back(std::move(field));
          field.clear();
          field_was_quoted = false;
          break;
        case '\r':
          if (pos < s.size() && s[pos] == '\n') break;
          field.push_back(c);
          break;
        case '\n':
          ++line;
          row.fields.push_back(std::move(field));
          row_done = true;
          break;
        default:
          if (field_was_quoted) malformed(line, "text after closing quote");
          field.push_back(c);
      }
    }
    if (row.fields.size() == 1 && row.fields[0].empty()) continue;  // blank line
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

std::set<CategoryTag> parse_categories(const std::vector<std::string>& names, std::size_t line) {
  std::set<CategoryTag> out;
  for (const auto& name : names) {
    auto tag = parse_category(name);
    if (!tag) malformed(line, "unknown category '" + name + "'");
    out.insert(*tag);
  }
  return out;
}

PromptRecord make_record(std::size_t line, std::string id, std::string body, std::string_view label,
                         std::set<CategoryTag> categories, std::string source, bool machine_labeled) {
  auto parsed = parse_label(label);
  if (!parsed) malformed(line, "label must be \"jailbreak\" or \"benign\", got '" + std::string(label) + "'");
  if (id.empty()) malformed(line, "empty id");
  if (!text::is_valid_utf8(body) || !text::is_valid_utf8(id) || !text::is_valid_utf8(source)) {
    malformed(line, "invalid UTF-8");
  }
  if (text::trim(body).empty()) malformed(line, "text is empty after trimming");
  if (*parsed == Label::Benign && !categories.empty()) {
    throw Error(ErrorCode::BenignWithCategories, kModule,
                "line " + std::to_string(line) + ": benign record '" + id + "' carries categories");
  }
  return PromptRecord{std::move(id), std::move(body), *parsed, std::move(categories), std::move(source),
                      machine_labeled};
}

std::vector<PromptRecord> parse_jsonl(std::string_view s) {
  std::vector<PromptRecord> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
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
      malformed(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) malformed(line_no, "expected a JSON object");
    auto string_field = [&](const char* key, bool required) -> std::string {
      auto it = obj.find(key);
      if (it == obj.end()) {
        if (required) malformed(line_no, std::string("missing field '") + key + "'");
        return {};
      }
      if (!it->is_string()) malformed(line_no, std::string("field '") + key + "' must be a string");
      return it->get<std::string>();
    };
    std::vector<std::string> names;
    if (auto it = obj.find("categories"); it != obj.end()) {
      if (!it->is_array()) malformed(line_no, "field 'categories' must be an array");
      for (const auto& v : *it) {
        if (!v.is_string()) malformed(line_no, "categories must be strings");
        names.push_back(v.get<std::string>());
      }
    }
    bool machine_labeled = false;
    if (auto it = obj.find("machine_labeled"); it != obj.end()) {
      if (!it->is_boolean()) malformed(line_no, "field 'machine_labeled' must be a boolean");
      machine_labeled = it->get<bool>();
    }
    records.push_back(make_record(line_no, string_field("id", true), string_field("text", true),
                                  string_field("label", true), parse_categories(names, line_no),
                                  string_field("source", false), machine_labeled));
  }
  return records;
}

std::vector<std::string> split_bar(std::string_view s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    auto bar = s.find('|', pos);
    out.emplace_back(s.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos));
    if (bar == std::string_view::npos) break;
    pos = bar + 1;
  }
  return out;
}

std::vector<PromptRecord> parse_csv(std::string_view s) {
  auto rows = read_csv(s);
  if (rows.empty()) return {};
  const auto& header = rows.front().fields;
  const std::vector<std::string> base{"id", "text", "label", "categories", "source"};
  auto with_flag = base;
  with_flag.push_back("machine_labeled");
  const bool has_flag = header == with_flag;
  if (header != base && !has_flag) {
    malformed(rows.front().line, "CSV header must be id,text,label,categories,source");
  }
  std::vector<PromptRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& row = rows[i];
    if (row.fields.size() != header.size()) {
      malformed(row.line, "expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(row.fields.size()));
    }
    bool machine_labeled = false;
    if (has_flag) {
      const auto& flag = row.fields[5];
      if (flag == "true") machine_labeled = true;
      else if (flag != "false" && !flag.empty()) malformed(row.line, "machine_labeled must be true or false");
    }
    records.push_back(make_record(row.line, std::move(row.fields[0]), std::move(row.fields[1]), row.fields[2],
                                  parse_categories(split_bar(row.fields[3]), row.line),
                                  std::move(row.fields[4]), machine_labeled));
  }
  return records;
}

Dataset subset(const Dataset& d, const std::vector<bool>& take) {
  std::vector<PromptRecord> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (take[i]) out.push_back(d[i]);
  }
  return Dataset(std::move(out));
}

// Marks the first k entries of a seeded shuffle of candidates.
void mark_sample(std::vector<std::size_t> candidates, std::size_t k, Rng& rng, std::vector<bool>& mark) {
  rng.shuffle(std::span<std::size_t>(candidates));
  for (std::size_t i = 0; i < k; ++i) mark[candidates[i]] = true;
}

}  // namespace

std::string_view to_string(Label label) { return label == Label::Jailbreak ? "jailbreak" : "benign"; }

std::optional<Label> parse_label(std::string_view text) {
  if (text == "jailbreak") return Label::Jailbreak;
  if (text == "benign") return Label::Benign;
  return std::nullopt;
}

std::span<const CategoryTag> all_pattern_tags() { return kPatternTags; }
std::span<const CategoryTag> default_novel_tags() { return kNovelTags; }

std::string_view to_string(CategoryTag tag) { return kTags[static_cast<std::size_t>(tag)].name; }

std::optional<CategoryTag> parse_category(std::string_view text) {
  for (const auto& info : kTags) {
    if (info.name == text) return info.tag;
  }
  return std::nullopt;
}

std::string_view to_string(CategoryGroup group) {
  switch (group) {
    case CategoryGroup::Pretending: return "Pretending";
    case CategoryGroup::AttentionShifting: return "AttentionShifting";
    case CategoryGroup::PrivilegeEscalation: return "PrivilegeEscalation";
    case CategoryGroup::EthicalAppeal: return "EthicalAppeal";
  }
  return "";
}

std::optional<CategoryGroup> group_of(CategoryTag tag) { return kTags[static_cast<std::size_t>(tag)].group; }

Dataset::Dataset(std::vector<PromptRecord> records) : records_(std::move(records)) {
  std::unordered_set<std::string_view> ids;
  ids.reserve(records_.size());
  for (const auto& r : records_) {
    if (r.id.empty()) throw Error(ErrorCode::MalformedRecord, kModule, "record with empty id");
    if (text::trim(r.text).empty()) {
      throw Error(ErrorCode::MalformedRecord, kModule, "record '" + r.id + "' has empty text");
    }
    if (r.label == Label::Benign && !r.categories.empty()) {
      throw Error(ErrorCode::BenignWithCategories, kModule, "benign record '" + r.id + "' carries categories");
    }
    if (!ids.insert(r.id).second) throw Error(ErrorCode::DuplicateId, kModule, "duplicate id '" + r.id + "'");
    if (r.label == Label::Jailbreak) ++counts_.jailbreak;
    else ++counts_.benign;
  }
}

std::size_t Dataset::support(CategoryTag tag) const {
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [tag](const PromptRecord& r) {
    return r.label == Label::Jailbreak && r.has_category(tag);
  }));
}

std::optional<CorpusFormat> parse_corpus_format(std::string_view text) {
  if (text == "jsonl") return CorpusFormat::Jsonl;
  if (text == "csv") return CorpusFormat::Csv;
  return std::nullopt;
}

Dataset parse_corpus(std::string_view contents, CorpusFormat format) {
  auto records = format == CorpusFormat::Jsonl ? parse_jsonl(contents) : parse_csv(contents);
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, kModule, "corpus contains no records");
  return Dataset(std::move(records));
}

Dataset load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return parse_corpus(io::read_file(path), format);
}

std::string serialize_corpus(const Dataset& d, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::Jsonl) {
    for (const auto& r : d) {
      nlohmann::ordered_json obj;
      obj["id"] = r.id;
      obj["text"] = r.text;
      obj["label"] = to_string(r.label);
      auto cats = nlohmann::ordered_json::array();
      for (auto tag : r.categories) cats.push_back(to_string(tag));
      obj["categories"] = std::move(cats);
      obj["source"] = r.source;
      if (r.machine_labeled) obj["machine_labeled"] = true;
      out += obj.dump();
      out += '\n';
    }
    return out;
  }
  const bool any_flag = std::any_of(d.begin(), d.end(), [](const PromptRecord& r) { return r.machine_labeled; });
  out += any_flag ? "id,text,label,categories,source,machine_labeled\n" : "id,text,label,categories,source\n";
  for (const auto& r : d) {
    std::string cats;
    for (auto tag : r.categories) {
      if (!cats.empty()) cats += '|';
      cats += to_string(tag);
    }
    out += csv_escape(r.id) + ',' + csv_escape(r.text) + ',' + std::string(to_string(r.label)) + ',' + cats + ',' +
           csv_escape(r.source);
    if (any_flag) out += r.machine_labeled ? ",true" : ",false";
    out += '\n';
  }
  return out;
}

void save_corpus(const Dataset& d, const std::filesystem::path& path, CorpusFormat format) {
  io::write_file_atomic(path, serialize_corpus(d, format));
}

Split split_random(const Dataset& d, const SplitSpec& spec) {
  if (d.empty()) throw Error(ErrorCode::EmptyCorpus, kModule, "cannot split an empty dataset");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, kModule, "test_fraction must lie in (0, 1)");
  }
  const auto& counts = d.counts();
  const auto total_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(d.size())));
  const auto jb_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(counts.jailbreak)));
  const std::size_t benign_test = total_test >= jb_test ? total_test - jb_test : 0;
  if (jb_test == 0 || benign_test == 0 || jb_test >= counts.jailbreak || benign_test >= counts.benign) {
    throw Error(ErrorCode::DegenerateSplit, kModule,
                "split of " + std::to_string(counts.jailbreak) + " jailbreak / " + std::to_string(counts.benign) +
                    " benign at test_fraction " + std::to_string(spec.test_fraction) +
                    " leaves a side without both classes");
  }

  std::vector<std::size_t> jb, benign;
  for (std::size_t i = 0; i < d.size(); ++i) {
    (d[i].label == Label::Jailbreak ? jb : benign).push_back(i);
  }
  Rng rng(spec.seed);
  std::vector<bool> in_test(d.size(), false);
  mark_sample(std::move(jb), jb_test, rng, in_test);
  mark_sample(std::move(benign), benign_test, rng, in_test);

  std::vector<bool> in_train(in_test.size());
  std::transform(in_test.begin(), in_test.end(), in_train.begin(), [](bool b) { return !b; });
  return Split{subset(d, in_train), subset(d, in_test)};
}

std::size_t holdout_benign_count(std::size_t held_jailbreaks, const ClassCounts& counts) {
  if (counts.jailbreak == 0) return 0;
  const double want = static_cast<double>(held_jailbreaks) * static_cast<double>(counts.benign) /
                      static_cast<double>(counts.jailbreak);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(want)));
}

Split split_holdout_category(const Dataset& d, CategoryTag held, std::uint64_t seed) {
  std::vector<std::size_t> benign;
  std::vector<bool> in_test(d.size(), false);
  std::size_t held_count = 0;
  std::size_t other_jb = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d[i];
    if (r.label == Label::Benign) {
      benign.push_back(i);
    } else if (r.has_category(held)) {
      in_test[i] = true;
      ++held_count;
    } else {
      ++other_jb;
    }
  }
  if (held_count == 0) {
    throw Error(ErrorCode::EmptyHoldout, kModule, "no jailbreak record carries '" + std::string(to_string(held)) + "'");
  }
  if (other_jb == 0) {
    throw Error(ErrorCode::DegenerateSplit, kModule,
                "every jailbreak carries '" + std::string(to_string(held)) + "'; training side would have none");
  }
  const auto need = holdout_benign_count(held_count, d.counts());
  if (need >= benign.size()) {
    throw Error(ErrorCode::InsufficientBenign, kModule,
                "holding out '" + std::string(to_string(held)) + "' needs " + std::to_string(need) +
                    " benign test records but only " + std::to_string(benign.size()) +
                    " exist (training must keep at least one)");
  }
  Rng rng(seed);
  mark_sample(std::move(benign), need, rng, in_test);

  std::vector<bool> in_train(in_test.size());
  std::transform(in_test.begin(), in_test.end(), in_train.begin(), [](bool b) { return !b; });
  return Split{subset(d, in_train), subset(d, in_test)};
}

}  // namespace promptgate
