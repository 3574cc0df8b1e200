#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "promptgate/error.hpp"
#include "promptgate/features.hpp"
#include "promptgate/io.hpp"
#include "promptgate/rng.hpp"
#include "synthetic.hpp"

using namespace promptgate;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using promptgate::testing::TempDir;

namespace {

using Strings = std::vector<std::string>;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

// Independent reference: whitespace-split texts (test inputs contain only
// lowercase words), dense weights, textbook formulas.
struct DenseTfidf {
  std::vector<std::string> vocab;
  std::vector<double> idf;

  DenseTfidf(const Strings& docs, std::size_t min_df) {
    std::map<std::string, std::size_t> df;
    for (const auto& doc : docs) {
      std::set<std::string> seen;
      std::istringstream in(doc);
      for (std::string w; in >> w;) seen.insert(w);
      for (const auto& w : seen) ++df[w];
    }
    const double n = static_cast<double>(docs.size());
    for (const auto& [w, f] : df) {
      if (f < min_df) continue;
      vocab.push_back(w);
      idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(f))) + 1.0);
    }
  }

  std::vector<double> transform(const std::string& doc) const {
    std::vector<double> v(vocab.size(), 0.0);
    std::istringstream in(doc);
    for (std::string w; in >> w;) {
      auto it = std::lower_bound(vocab.begin(), vocab.end(), w);
      if (it != vocab.end() && *it == w) v[static_cast<std::size_t>(it - vocab.begin())] += 1.0;
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] *= idf[i];
      sq += v[i] * v[i];
    }
    if (sq > 0)
      for (auto& x : v) x /= std::sqrt(sq);
    return v;
  }
};

}  // namespace

TEST_CASE("tokenizer lowercases and splits on punctuation") {
  CHECK(tokenize("Ignore previous instructions.") == Strings{"ignore", "previous", "instructions"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("I'm DAN-5") == Strings{"i'm", "dan", "5"});
  CHECK(tokenize("'quoted' words''") == Strings{"quoted", "words"});
  CHECK(tokenize("don\xE2\x80\x99t") == Strings{"don't"});
  CHECK(tokenize("Caf\xC3\xA9 \xC3\x9C" "ber na\xC3\xAFve") == Strings{"caf\xC3\xA9", "\xC3\xBC" "ber", "na\xC3\xAFve"});
  CHECK(tokenize("\xD0\x9F\xD1\x80\xD0\xB8\xD0\xB2\xD0\xB5\xD1\x82!") == Strings{"\xD0\xBF\xD1\x80\xD0\xB8\xD0\xB2\xD0\xB5\xD1\x82"});
  CHECK(tokenize("a\xF0\x9F\x98\x80" "b") == Strings{"a", "b"});
  CHECK(tokenize("bad\xFFutf8") == Strings{"bad", "utf8"});
}

TEST_CASE("token spans point at the source bytes") {
  const std::string text = "Hello, World's end";
  for (const auto& s : tokenize_spans(text)) {
    CHECK(s.end > s.begin);
    CHECK(tokenize(text.substr(s.begin, s.end - s.begin)) == Strings{s.token});
  }
}

TEST_CASE("smoothed idf on a three document corpus") {
  const Strings docs{"a b", "a c", "a d"};
  const auto m = fit_tfidf(docs, {1, std::nullopt});
  REQUIRE(m.terms() == Strings{"a", "b", "c", "d"});
  CHECK(m.df()[0] == 3);
  // ln(4/4) + 1 and ln(4/2) + 1.
  CHECK(m.idf()[0] == 1.0);
  CHECK_THAT(m.idf()[1], WithinAbs(std::log(2.0) + 1.0, 1e-15));
  CHECK_THAT(m.idf()[1], WithinAbs(1.6931, 1e-4));

  const auto only_common = fit_tfidf(docs, {2, std::nullopt});
  CHECK(only_common.terms() == Strings{"a"});
}

TEST_CASE("transform applies count times idf then L2 normalization") {
  const Strings docs{"a b", "a c", "a d"};
  const auto m = fit_tfidf(docs, {1, std::nullopt});
  const auto v = m.transform("a b");
  const double idf_b = std::log(2.0) + 1.0;
  const double norm = std::sqrt(1.0 + idf_b * idf_b);
  REQUIRE(v.entries.size() == 2);
  CHECK_THAT(v.value_at(0), WithinAbs(1.0 / norm, 1e-15));
  CHECK_THAT(v.value_at(1), WithinAbs(idf_b / norm, 1e-15));
  CHECK_THAT(v.value_at(0), WithinAbs(0.5085, 1e-4));
  CHECK_THAT(v.value_at(1), WithinAbs(0.8611, 1e-4));

  CHECK(m.transform("zzz qqq").entries.empty());
  const auto aa = m.transform("a a");
  REQUIRE(aa.entries.size() == 1);
  CHECK(aa.entries[0].value == 1.0);
}

TEST_CASE("tfidf matches a dense reference on random corpora") {
  const Strings words{"alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"};
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    Rng rng(seed);
    Strings docs;
    const auto n_docs = 2 + rng.uniform_index(20);
    for (std::uint64_t d = 0; d < n_docs; ++d) {
      std::string doc;
      const auto len = 1 + rng.uniform_index(12);
      for (std::uint64_t k = 0; k < len; ++k) doc += words[rng.uniform_index(words.size())] + " ";
      docs.push_back(doc);
    }
    const std::size_t min_df = 1 + rng.uniform_index(2);
    const DenseTfidf oracle(docs, min_df);
    if (oracle.vocab.empty()) continue;
    const auto m = fit_tfidf(docs, {min_df, std::nullopt});
    REQUIRE(m.terms() == oracle.vocab);
    for (const auto& doc : docs) {
      const auto expected = oracle.transform(doc);
      const auto got = m.transform(doc);
      for (std::uint32_t i = 0; i < expected.size(); ++i) CHECK_THAT(got.value_at(i), WithinAbs(expected[i], 1e-12));
      if (!got.entries.empty()) CHECK_THAT(got.norm(), WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("max_features keeps the most frequent terms") {
  const Strings docs{"a b c", "a b", "a d", "a e"};
  const auto m = fit_tfidf(docs, {1, 2});
  CHECK(m.terms() == Strings{"a", "b"});
  const auto tie = fit_tfidf(Strings{"x y", "z"}, {1, 2});
  CHECK(tie.terms() == Strings{"x", "y"});
}

TEST_CASE("tfidf fitting errors") {
  CHECK(code_of([] { fit_tfidf(Strings{"a", "b"}, {2, std::nullopt}); }) == ErrorCode::EmptyVocabulary);
  CHECK(code_of([] { TfidfModel(Strings{"b", "a"}, {1, 1}, 2); }) == ErrorCode::MalformedArtifact);
  CHECK(code_of([] { TfidfModel(Strings{"a"}, {3}, 2); }) == ErrorCode::MalformedArtifact);
}

TEST_CASE("embedding file with dim 384 loads three vectors") {
  Rng rng(4);
  std::string body = "dim=384\n";
  for (int r = 0; r < 3; ++r) {
    body += "rec" + std::to_string(r) + "\t";
    for (int i = 0; i < 384; ++i) body += (i ? " " : "") + std::to_string(rng.uniform_unit() - 0.5);
    body += "\n";
  }
  TempDir dir;
  io::write_file_atomic(dir / "emb.txt", body);
  const auto table = load_embeddings(dir / "emb.txt");
  CHECK(table.dim() == 384);
  CHECK(table.size() == 3);
  CHECK(table.at("rec1").size() == 384);
  CHECK(table.ids() == Strings{"rec0", "rec1", "rec2"});

  const auto again = parse_embeddings(serialize_embeddings(table));
  for (const auto& id : table.ids()) CHECK(again.at(id) == table.at(id));
}

TEST_CASE("embedding format errors") {
  std::string short_row = "dim=384\nx\t";
  for (int i = 0; i < 383; ++i) short_row += "0.5 ";
  CHECK(code_of([&] { parse_embeddings(short_row); }) == ErrorCode::DimMismatch);
  CHECK(code_of([] { parse_embeddings("dim=2\nx\t1 nan\n"); }) == ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_embeddings("dim=2\nx\t1 abc\n"); }) == ErrorCode::MalformedRow);
  CHECK(code_of([] { parse_embeddings("dim=2\nx\t1 2\nx\t3 4\n"); }) == ErrorCode::DuplicateId);
  CHECK(code_of([] { parse_embeddings("dims=2\n"); }) == ErrorCode::MalformedRow);

  const auto empty = parse_embeddings("dim=8\n");
  CHECK(empty.size() == 0);
  CHECK(code_of([&] { empty.at("anything"); }) == ErrorCode::MissingEmbedding);
}

TEST_CASE("featurizer dispatches on its source") {
  auto table = std::make_shared<EmbeddingTable>(3);
  table->insert("r1", {1.0, 0.0, -2.0});
  const Featurizer emb(table);
  PromptRecord r{"r1", "text", Label::Benign, {}, "", false};
  CHECK(emb.kind() == FeatureKind::Embeddings);
  CHECK(emb.dim() == 3);
  const auto v = emb.featurize(r);
  CHECK(v.dim == 3);
  CHECK(v.value_at(0) == 1.0);
  CHECK(v.value_at(1) == 0.0);
  CHECK(v.value_at(2) == -2.0);
  r.id = "missing";
  CHECK(code_of([&] { emb.featurize(r); }) == ErrorCode::MissingEmbedding);

  const Featurizer tf(fit_tfidf(Strings{"a b", "a c"}, {1, std::nullopt}));
  CHECK(tf.kind() == FeatureKind::Tfidf);
  CHECK(tf.tfidf() != nullptr);
  CHECK(emb.tfidf() == nullptr);
}
