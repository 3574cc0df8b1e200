#include "promptgate/artifact.hpp"

#include <cstdio>
#include <json.hpp>

#include "promptgate/error.hpp"
#include "promptgate/io.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

using json = nlohmann::ordered_json;
constexpr std::string_view kModule = "models";

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorCode::MalformedArtifact, kModule, what); }

json tfidf_to_json(const TfidfModel& m) {
  json j;
  j["vocabulary"] = m.terms();
  j["df"] = m.df();
  j["n_docs"] = m.n_docs();
  return j;
}

TfidfModel tfidf_from_json(const json& j) {
  return TfidfModel(j.at("vocabulary").get<std::vector<std::string>>(), j.at("df").get<std::vector<std::uint64_t>>(),
                    j.at("n_docs").get<std::uint64_t>());
}

json params_to_json(const BinaryModel& model) {
  json p;
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    p["weights"] = lin->weights();
    p["bias"] = lin->bias();
    p["train_meta"] = {{"epochs", lin->meta().epochs},
                       {"learning_rate", lin->meta().learning_rate},
                       {"l2_lambda", lin->meta().l2_lambda},
                       {"seed", lin->meta().seed}};
    return p;
  }
  const auto& ens = std::get<TreeEnsembleModel>(model);
  p["dim"] = ens.dim();
  p["n_trees"] = ens.n_trees();
  p["max_depth"] = ens.max_depth();
  p["seed"] = ens.seed();
  auto trees = json::array();
  for (const auto& t : ens.trees()) {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold, value;
    std::vector<std::uint32_t> left, right;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
  }
  p["trees"] = std::move(trees);
  return p;
}

BinaryModel params_from_json(std::string_view kind, const json& p) {
  if (kind == "linear") {
    LinearTrainMeta meta;
    if (p.contains("train_meta")) {
      const auto& m = p["train_meta"];
      meta = {m.at("epochs").get<std::size_t>(), m.at("learning_rate").get<double>(), m.at("l2_lambda").get<double>(),
              m.at("seed").get<std::uint64_t>()};
    }
    return LinearModel(p.at("weights").get<std::vector<double>>(), p.at("bias").get<double>(), meta);
  }
  if (kind == "ensemble") {
    std::vector<DecisionTree> trees;
    for (const auto& t : p.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<std::int32_t>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<std::uint32_t>>();
      const auto right = t.at("right").get<std::vector<std::uint32_t>>();
      const auto value = t.at("value").get<std::vector<double>>();
      const auto n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
        malformed("tree columns differ in length");
      }
      DecisionTree tree;
      for (std::size_t i = 0; i < n; ++i) tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i]});
      trees.push_back(std::move(tree));
    }
    if (trees.size() != p.at("n_trees").get<std::size_t>()) malformed("n_trees disagrees with tree list");
    return TreeEnsembleModel(std::move(trees), p.at("dim").get<std::size_t>(), p.at("max_depth").get<std::size_t>(),
                             p.at("seed").get<std::uint64_t>());
  }
  malformed("unknown model kind '" + std::string(kind) + "'");
}

std::string_view kind_of(const BinaryModel& m) {
  return std::holds_alternative<LinearModel>(m) ? "linear" : "ensemble";
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(std::string("invalid JSON: ") + e.what());
  }
}

void check_version(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) malformed("missing format_version");
  if (j["format_version"] != kArtifactFormatVersion) {
    malformed("unsupported format_version " + j["format_version"].dump());
  }
}

}  // namespace

std::string artifact_version(std::string_view kind, std::string_view serialized) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(serialized)));
  return std::string(kind) + "-" + hex;
}

double ModelArtifact::score(const PromptRecord& record) const {
  if (!featurizer) malformed("embedding artifact has no embedding table attached");
  return predict_proba(model, featurizer->featurize(record));
}

double ModelArtifact::score_text(std::string_view text) const {
  if (!featurizer || !featurizer->tfidf()) malformed("artifact cannot featurize raw text (no TF-IDF model)");
  return predict_proba(model, featurizer->tfidf()->transform(text));
}

std::string serialize_model(const Featurizer& featurizer, const BinaryModel& model) {
  if (featurizer.dim() != model_dim(model)) malformed("featurizer and model dimensions differ");
  json j;
  j["format_version"] = kArtifactFormatVersion;
  j["kind"] = kind_of(model);
  if (const auto* tfidf = featurizer.tfidf()) {
    j["features"] = "tfidf";
    j["tfidf"] = tfidf_to_json(*tfidf);
  } else {
    j["features"] = "embeddings";
    j["embedding_dim"] = featurizer.dim();
  }
  j["params"] = params_to_json(model);
  return j.dump() + "\n";
}

ModelArtifact parse_model(std::string_view text) {
  const auto j = parse_json(text);
  check_version(j);
  try {
    const auto kind = j.at("kind").get<std::string>();
    ModelArtifact a{std::nullopt, FeatureKind::Tfidf, params_from_json(kind, j.at("params")), artifact_version(kind, text)};
    const auto features = j.at("features").get<std::string>();
    if (features == "tfidf") {
      a.featurizer.emplace(tfidf_from_json(j.at("tfidf")));
      if (a.featurizer->dim() != model_dim(a.model)) malformed("TF-IDF vocabulary size differs from model dim");
    } else if (features == "embeddings") {
      a.feature_kind = FeatureKind::Embeddings;
      if (j.at("embedding_dim").get<std::size_t>() != model_dim(a.model)) malformed("embedding_dim differs from model dim");
    } else {
      malformed("unknown features '" + features + "'");
    }
    return a;
  } catch (const json::exception& e) {
    malformed(e.what());
  }
}

ModelArtifact load_model(const std::filesystem::path& path) { return parse_model(io::read_file(path)); }

std::string serialize_one_vs_all(const OneVsAllClassifier& c) {
  const auto* tfidf = c.featurizer.tfidf();
  if (!tfidf) malformed("only TF-IDF one-vs-all classifiers serialize");
  json j;
  j["format_version"] = kArtifactFormatVersion;
  j["kind"] = "one_vs_all";
  j["features"] = "tfidf";
  j["tfidf"] = tfidf_to_json(*tfidf);
  json params;
  params["threshold"] = c.decision_threshold;
  json overrides = json::object();
  for (const auto& [tag, t] : c.threshold_overrides) overrides[std::string(to_string(tag))] = t;
  params["thresholds"] = std::move(overrides);
  json models = json::object();
  for (const auto& [tag, m] : c.models) {
    models[std::string(to_string(tag))] = {{"kind", kind_of(m)}, {"params", params_to_json(m)}};
  }
  params["models"] = std::move(models);
  auto skipped = json::array();
  for (const auto& s : c.skipped) skipped.push_back({{"category", to_string(s.tag)}, {"reason", s.reason}});
  params["skipped"] = std::move(skipped);
  j["params"] = std::move(params);
  return j.dump() + "\n";
}

OneVsAllClassifier parse_one_vs_all(std::string_view text) {
  const auto j = parse_json(text);
  check_version(j);
  try {
    if (j.at("kind") != "one_vs_all") malformed("expected kind one_vs_all");
    OneVsAllClassifier c{Featurizer(tfidf_from_json(j.at("tfidf"))), {}, 0.5, {}, {}};
    const auto& p = j.at("params");
    c.decision_threshold = p.at("threshold").get<double>();
    auto tag_of = [](const std::string& name) {
      auto tag = parse_category(name);
      if (!tag) malformed("unknown category '" + name + "'");
      return *tag;
    };
    for (const auto& [name, t] : p.at("thresholds").items()) c.threshold_overrides[tag_of(name)] = t.get<double>();
    for (const auto& [name, m] : p.at("models").items()) {
      auto model = params_from_json(m.at("kind").get<std::string>(), m.at("params"));
      if (model_dim(model) != c.featurizer.dim()) malformed("member '" + name + "' dim differs from vocabulary");
      c.models.emplace(tag_of(name), std::move(model));
    }
    for (const auto& s : p.at("skipped")) {
      c.skipped.push_back({tag_of(s.at("category").get<std::string>()), s.at("reason").get<std::string>()});
    }
    return c;
  } catch (const json::exception& e) {
    malformed(e.what());
  }
}

OneVsAllClassifier load_one_vs_all(const std::filesystem::path& path) {
  return parse_one_vs_all(io::read_file(path));
}

}  // namespace promptgate
