#include <catch_amalgamated.hpp>

#include <json.hpp>

#include "promptgate/artifact.hpp"
#include "promptgate/error.hpp"
#include "promptgate/eval.hpp"
#include "synthetic.hpp"

using namespace promptgate;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

TrainedPipeline trained(ModelKind kind) {
  const auto d = promptgate::testing::make_synthetic({.n_records = 300, .jailbreak_fraction = 0.2, .seed = 4});
  PipelineConfig cfg;
  cfg.model.kind = kind;
  cfg.model.n_trees = 15;
  cfg.model.max_depth = 6;
  return fit_pipeline(d, cfg, 10);
}

}  // namespace

TEST_CASE("model artifacts round-trip to identical scores and bytes") {
  const auto d = promptgate::testing::make_synthetic({.n_records = 120, .seed = 9});
  for (auto kind : {ModelKind::Linear, ModelKind::Ensemble}) {
    const auto p = trained(kind);
    const auto text = serialize_model(p.featurizer, p.model);
    const auto artifact = parse_model(text);
    REQUIRE(artifact.featurizer.has_value());
    CHECK(serialize_model(*artifact.featurizer, artifact.model) == text);
    CHECK(artifact.version == artifact_version(to_string(kind), text));
    CHECK(artifact.version.rfind(std::string(to_string(kind)) + "-", 0) == 0);
    const auto offline = p.score(d);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(artifact.score(d[i]) == offline[i]);
      CHECK(artifact.score_text(d[i].text) == offline[i]);
    }
    const auto j = nlohmann::json::parse(text);
    CHECK(j["format_version"] == 1);
    CHECK(j["kind"] == to_string(kind));
    CHECK(j.contains("tfidf"));
  }
}

TEST_CASE("one-vs-all artifacts round-trip") {
  const auto d = promptgate::testing::make_synthetic(
      {.n_records = 400, .jailbreak_fraction = 0.3, .seed = 2, .tags = {CategoryTag::SudoMode, CategoryTag::Gameplay}});
  TrainConfig cfg;
  auto c = train_one_vs_all(d, cfg, TfidfParams{});
  c.threshold_overrides[CategoryTag::Gameplay] = 0.7;
  const auto text = serialize_one_vs_all(c);
  const auto back = parse_one_vs_all(text);
  CHECK(serialize_one_vs_all(back) == text);
  CHECK(back.threshold_for(CategoryTag::Gameplay) == 0.7);
  CHECK(back.threshold_for(CategoryTag::SudoMode) == 0.5);
  for (const auto& r : d) CHECK(back.scores(r) == c.scores(r));
}

TEST_CASE("malformed artifacts are rejected") {
  CHECK(code_of([] { parse_model("not json"); }) == ErrorCode::MalformedArtifact);
  CHECK(code_of([] { parse_model(R"({"format_version":2,"kind":"linear"})"); }) == ErrorCode::MalformedArtifact);
  const auto p = trained(ModelKind::Linear);
  auto j = nlohmann::json::parse(serialize_model(p.featurizer, p.model));
  j["params"]["weights"].erase(0);
  CHECK(code_of([&] { parse_model(j.dump()); }) == ErrorCode::MalformedArtifact);
  CHECK(code_of([] { load_model("/nonexistent/model.json"); }) == ErrorCode::Io);
}

TEST_CASE("embedding artifacts store only the dimension") {
  auto table = std::make_shared<EmbeddingTable>(2);
  table->insert("a", {1.0, 0.0});
  table->insert("b", {0.0, 1.0});
  const Featurizer f(table);
  const LinearModel m({1.0, -1.0}, 0.0);
  const auto text = serialize_model(f, m);
  const auto artifact = parse_model(text);
  CHECK(artifact.feature_kind == FeatureKind::Embeddings);
  CHECK_FALSE(artifact.featurizer.has_value());
  CHECK(nlohmann::json::parse(text)["embedding_dim"] == 2);
}
