#include "promptgate/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <unordered_set>

#include "promptgate/error.hpp"
#include "promptgate/io.hpp"
#include "promptgate/text.hpp"

namespace promptgate {

namespace {

constexpr std::string_view kModule = "features";

struct Range {
  char32_t lo, hi;
};

// Letter and digit blocks recognized without a Unicode database. Covers Latin,
// Greek, Cyrillic, Armenian, Hebrew, Arabic, Devanagari, Thai, kana, CJK,
// Hangul and fullwidth forms.
constexpr Range kWordRanges[] = {
    {U'0', U'9'},        {U'A', U'Z'},        {U'a', U'z'},        {0xAA, 0xAA},
    {0xB5, 0xB5},        {0xBA, 0xBA},        {0xC0, 0xD6},        {0xD8, 0xF6},
    {0xF8, 0x2AF},       {0x370, 0x373},      {0x376, 0x377},      {0x37B, 0x37D},
    {0x386, 0x386},      {0x388, 0x3FF},      {0x400, 0x481},      {0x48A, 0x52F},
    {0x531, 0x556},      {0x561, 0x587},      {0x5D0, 0x5EA},      {0x620, 0x64A},
    {0x660, 0x669},      {0x904, 0x939},      {0x966, 0x96F},      {0xE01, 0xE30},
    {0xE50, 0xE59},      {0x1E00, 0x1FFF},    {0x3041, 0x3096},    {0x30A1, 0x30FA},
    {0x3400, 0x4DBF},    {0x4E00, 0x9FFF},    {0xAC00, 0xD7A3},    {0xFF10, 0xFF19},
    {0xFF21, 0xFF3A},    {0xFF41, 0xFF5A},
};

bool is_word_cp(char32_t cp) {
  for (const auto& r : kWordRanges) {
    if (cp < r.lo) return false;
    if (cp <= r.hi) return true;
  }
  return false;
}

bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019; }

char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
    if (cp == 0x178) return 0xFF;
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
    if (odd_upper) return (cp % 2 == 1) ? cp + 1 : cp;
    return (cp % 2 == 0) ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0xFF21 && cp <= 0xFF3A) return cp + 0x20;
  return cp;
}

}  // namespace

std::vector<TokenSpan> tokenize_spans(std::string_view s) {
  std::vector<TokenSpan> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t start = pos;
    char32_t cp = text::next_code_point(s, pos);
    if (!is_word_cp(cp) && !is_apostrophe(cp)) continue;

    // Collect the run, remembering where each code point starts.
    std::vector<std::pair<std::size_t, char32_t>> run{{start, cp}};
    std::size_t end = pos;
    while (end < s.size()) {
      std::size_t next = end;
      char32_t c = text::next_code_point(s, next);
      if (!is_word_cp(c) && !is_apostrophe(c)) break;
      run.emplace_back(end, c);
      end = next;
    }
    pos = end;

    std::size_t lo = 0, hi = run.size();
    while (lo < hi && is_apostrophe(run[lo].second)) ++lo;
    while (hi > lo && is_apostrophe(run[hi - 1].second)) --hi;
    if (lo == hi) continue;

    TokenSpan span;
    span.begin = run[lo].first;
    span.end = hi < run.size() ? run[hi].first : end;
    for (std::size_t i = lo; i < hi; ++i) {
      text::append_utf8(span.token, is_apostrophe(run[i].second) ? U'\'' : to_lower(run[i].second));
    }
    out.push_back(std::move(span));
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  auto spans = tokenize_spans(text);
  std::vector<std::string> out;
  out.reserve(spans.size());
  for (auto& s : spans) out.push_back(std::move(s.token));
  return out;
}

double FeatureVector::value_at(std::uint32_t index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const FeatureEntry& e, std::uint32_t i) { return e.index < i; });
  return (it != entries.end() && it->index == index) ? it->value : 0.0;
}

double FeatureVector::norm() const {
  double sq = 0.0;
  for (const auto& e : entries) sq += e.value * e.value;
  return std::sqrt(sq);
}

FeatureVector from_dense(std::span<const double> values) {
  FeatureVector v;
  v.dim = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) v.entries.push_back({static_cast<std::uint32_t>(i), values[i]});
  }
  return v;
}

double smoothed_idf(std::uint64_t n_docs, std::uint64_t df) {
  return std::log(static_cast<double>(1 + n_docs) / static_cast<double>(1 + df)) + 1.0;
}

TfidfModel::TfidfModel(std::vector<std::string> terms, std::vector<std::uint64_t> df, std::uint64_t n_docs)
    : terms_(std::move(terms)), df_(std::move(df)), n_docs_(n_docs) {
  if (terms_.size() != df_.size()) {
    throw Error(ErrorCode::MalformedArtifact, kModule, "vocabulary and df lengths differ");
  }
  idf_.reserve(terms_.size());
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (i > 0 && !(terms_[i - 1] < terms_[i])) {
      throw Error(ErrorCode::MalformedArtifact, kModule, "vocabulary is not strictly sorted");
    }
    if (df_[i] < 1 || df_[i] > n_docs_) {
      throw Error(ErrorCode::MalformedArtifact, kModule, "df out of range for term '" + terms_[i] + "'");
    }
    idf_.push_back(smoothed_idf(n_docs_, df_[i]));
    index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
  }
}

std::optional<std::uint32_t> TfidfModel::index_of(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

FeatureVector TfidfModel::transform(std::string_view text) const {
  std::map<std::uint32_t, std::uint64_t> counts;
  for (const auto& tok : tokenize(text)) {
    if (auto it = index_.find(tok); it != index_.end()) ++counts[it->second];
  }
  FeatureVector v;
  v.dim = dim();
  v.entries.reserve(counts.size());
  double sq = 0.0;
  for (auto [index, count] : counts) {
    const double w = static_cast<double>(count) * idf_[index];
    v.entries.push_back({index, w});
    sq += w * w;
  }
  if (sq > 0.0) {
    const double n = std::sqrt(sq);
    for (auto& e : v.entries) e.value /= n;
  }
  return v;
}

TfidfModel fit_tfidf(std::span<const std::string> texts, const TfidfParams& params) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, kModule, "cannot fit TF-IDF on zero documents");
  if (params.min_df < 1) throw Error(ErrorCode::InvalidArgument, kModule, "min_df must be at least 1");

  std::unordered_map<std::string, std::uint64_t> df;
  for (const auto& t : texts) {
    auto toks = tokenize(t);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& tok : toks) ++df[std::move(tok)];
  }

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [term, n] : df) {
    if (n >= params.min_df) kept.emplace_back(term, n);
  }
  if (kept.empty()) {
    throw Error(ErrorCode::EmptyVocabulary, kModule,
                "no term reaches min_df " + std::to_string(params.min_df));
  }
  if (params.max_features && kept.size() > *params.max_features) {
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    kept.resize(*params.max_features);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<std::string> terms;
  std::vector<std::uint64_t> dfs;
  terms.reserve(kept.size());
  dfs.reserve(kept.size());
  for (auto& [term, n] : kept) {
    terms.push_back(std::move(term));
    dfs.push_back(n);
  }
  return TfidfModel(std::move(terms), std::move(dfs), texts.size());
}

TfidfModel fit_tfidf(const Dataset& d, const TfidfParams& params) {
  std::vector<std::string> texts;
  texts.reserve(d.size());
  for (const auto& r : d) texts.push_back(r.text);
  return fit_tfidf(texts, params);
}

// ---- embeddings ----------------------------------------------------------

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, kModule, "embedding dim must be positive");
}

void EmbeddingTable::insert(std::string id, std::vector<double> values) {
  if (values.size() != dim_) {
    throw Error(ErrorCode::DimMismatch, kModule,
                "id '" + id + "' has " + std::to_string(values.size()) + " values, expected " + std::to_string(dim_));
  }
  if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::MalformedRow, kModule, "id '" + id + "' has a non-finite value");
  }
  if (vectors_.contains(id)) throw Error(ErrorCode::DuplicateId, kModule, "duplicate embedding id '" + id + "'");
  ids_.push_back(id);
  vectors_.emplace(std::move(id), std::move(values));
}

const std::vector<double>& EmbeddingTable::at(std::string_view id) const {
  auto it = vectors_.find(std::string(id));
  if (it == vectors_.end()) {
    throw Error(ErrorCode::MissingEmbedding, kModule, "no embedding for id '" + std::string(id) + "'");
  }
  return it->second;
}

bool EmbeddingTable::contains(std::string_view id) const { return vectors_.contains(std::string(id)); }

EmbeddingTable parse_embeddings(std::string_view s) {
  auto eol = s.find('\n');
  auto header = text::trim(s.substr(0, eol));
  std::size_t dim = 0;
  if (!header.starts_with("dim=")) throw Error(ErrorCode::MalformedRow, kModule, "line 1: expected dim=<int>");
  auto digits = header.substr(4);
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), dim);
  if (ec != std::errc{} || p != digits.data() + digits.size() || dim == 0) {
    throw Error(ErrorCode::MalformedRow, kModule, "line 1: invalid dim '" + std::string(digits) + "'");
  }
  EmbeddingTable table(dim);
  std::size_t line_no = 1;
  std::size_t pos = eol == std::string_view::npos ? s.size() : eol + 1;
  while (pos < s.size()) {
    auto next = s.find('\n', pos);
    if (next == std::string_view::npos) next = s.size();
    auto line = s.substr(pos, next - pos);
    pos = next + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw Error(ErrorCode::MalformedRow, kModule, "line " + std::to_string(line_no) + ": expected <id>\\t<values>");
    }
    std::string id(line.substr(0, tab));
    std::vector<double> values;
    values.reserve(dim);
    auto rest = line.substr(tab + 1);
    std::size_t i = 0;
    while (i < rest.size()) {
      while (i < rest.size() && rest[i] == ' ') ++i;
      if (i >= rest.size()) break;
      auto j = rest.find(' ', i);
      if (j == std::string_view::npos) j = rest.size();
      double v = 0.0;
      auto [ptr, err] = std::from_chars(rest.data() + i, rest.data() + j, v);
      if (err != std::errc{} || ptr != rest.data() + j) {
        throw Error(ErrorCode::MalformedRow, kModule,
                    "line " + std::to_string(line_no) + ": bad number '" + std::string(rest.substr(i, j - i)) + "'");
      }
      values.push_back(v);
      i = j;
    }
    table.insert(std::move(id), std::move(values));
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) { return parse_embeddings(io::read_file(path)); }

std::string serialize_embeddings(const EmbeddingTable& table) {
  std::string out = "dim=" + std::to_string(table.dim()) + "\n";
  char buf[64];
  for (const auto& id : table.ids()) {
    out += id;
    out += '\t';
    const auto& v = table.at(id);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ' ';
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v[i]);
      out.append(buf, p);
    }
    out += '\n';
  }
  return out;
}

// ---- featurizer ----------------------------------------------------------

std::size_t Featurizer::dim() const {
  if (auto* m = std::get_if<TfidfModel>(&source_)) return m->dim();
  return std::get<std::shared_ptr<const EmbeddingTable>>(source_)->dim();
}

FeatureVector Featurizer::featurize(const PromptRecord& record) const {
  if (auto* m = std::get_if<TfidfModel>(&source_)) return m->transform(record.text);
  return from_dense(std::get<std::shared_ptr<const EmbeddingTable>>(source_)->at(record.id));
}

std::vector<FeatureVector> Featurizer::featurize(const Dataset& d) const {
  std::vector<FeatureVector> out;
  out.reserve(d.size());
  for (const auto& r : d) out.push_back(featurize(r));
  return out;
}

}  // namespace promptgate
