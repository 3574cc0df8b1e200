#include "promptgate/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <json.hpp>
#include <pthread.h>
#include <thread>

#include "promptgate/artifact.hpp"
#include "promptgate/augment.hpp"
#include "promptgate/error.hpp"
#include "promptgate/eval.hpp"
#include "promptgate/io.hpp"
#include "promptgate/keywords.hpp"
#include "promptgate/service.hpp"

namespace promptgate::cli {

namespace {

struct RawFlags {
  std::string format = "jsonl";
  std::string model = "linear";
  std::string features = "tfidf";
  std::string tags;
  double feature_fraction = 0.0;
};

void add_corpus(CLI::App* app, Options& o, RawFlags& raw, bool required = true) {
  auto* opt = app->add_option("--corpus", o.corpus, "Corpus file");
  if (required) opt->required();
  app->add_option("--format", raw.format, "Corpus format: jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));
}

void add_features(CLI::App* app, Options& o, RawFlags& raw) {
  app->add_option("--features", raw.features, "Feature source: tfidf or embeddings")
      ->check(CLI::IsMember({"tfidf", "embeddings"}));
  app->add_option("--embeddings", o.embeddings, "Precomputed embedding file (with --features embeddings)");
  app->add_option("--min-df", o.min_df, "TF-IDF minimum document frequency")->check(CLI::PositiveNumber);
  app->add_option("--max-features", o.max_features, "TF-IDF vocabulary cap")->check(CLI::PositiveNumber);
}

void add_model(CLI::App* app, Options& o, RawFlags& raw) {
  app->add_option("--model", raw.model, "Classifier: linear or ensemble")->check(CLI::IsMember({"linear", "ensemble"}));
  app->add_option("--epochs", o.epochs, "Logistic regression epochs");
  app->add_option("--learning-rate", o.learning_rate, "Logistic regression initial learning rate")
      ->check(CLI::PositiveNumber);
  app->add_option("--l2", o.l2, "L2 penalty")->check(CLI::NonNegativeNumber);
  app->add_option("--n-trees", o.n_trees, "Trees in the ensemble")->check(CLI::PositiveNumber);
  app->add_option("--max-depth", o.max_depth, "Maximum tree depth")->check(CLI::PositiveNumber);
  app->add_option("--feature-fraction", raw.feature_fraction, "Split candidates per node as a fraction of dim")
      ->check(CLI::Range(0.0, 1.0));
  app->add_flag("--class-weights", o.class_weights, "Inverse-frequency class weights");
}

void add_augment(CLI::App* app, Options& o, bool with_switch) {
  if (with_switch) app->add_flag("--augment", o.augment, "Augment training partitions");
  app->add_option("--thesaurus", o.thesaurus, "Thesaurus JSONL");
  app->add_option("--rewrites", o.rewrites, "Back-translation stub rewrite table JSONL");
  app->add_option("--synonym-rate", o.synonym_rate, "Per-token synonym replacement probability")
      ->check(CLI::Range(0.0, 1.0));
  app->add_flag("--no-back-translation", o.no_back_translation, "Skip the back-translation step");
  app->add_option("--copies", o.copies, "Augmented copies per record")->check(CLI::PositiveNumber);
}

void add_seed(CLI::App* app, Options& o) { app->add_option("--seed", o.seed, "Seed for every random choice"); }

void add_jobs(CLI::App* app, Options& o) {
  app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

std::vector<CategoryTag> parse_tags(const std::string& list, const std::string& usage) {
  std::vector<CategoryTag> tags;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto comma = list.find(',', pos);
    if (comma == std::string::npos) comma = list.size();
    const auto name = list.substr(pos, comma - pos);
    auto tag = parse_category(name);
    if (!tag || *tag == CategoryTag::Unclassified) {
      throw UsageError("--tags: unknown category '" + name + "'", usage);
    }
    tags.push_back(*tag);
    pos = comma + 1;
  }
  return tags;
}

std::string module_error(const std::exception& e) { return std::string("promptgate: ") + e.what(); }

std::shared_ptr<const EmbeddingTable> maybe_embeddings(const Options& o) {
  if (o.features != FeatureKind::Embeddings) return nullptr;
  return std::make_shared<const EmbeddingTable>(load_embeddings(o.embeddings));
}

std::shared_ptr<const Translator> make_translator(const Options& o) {
  if (!o.rewrites.empty()) return std::make_shared<StubTranslator>(load_rewrite_rules(o.rewrites));
  return std::make_shared<StubTranslator>(StubTranslator::with_default_rules());
}

std::shared_ptr<const Thesaurus> make_thesaurus(const Options& o) {
  if (o.thesaurus.empty()) return std::make_shared<Thesaurus>();
  return std::make_shared<Thesaurus>(load_thesaurus(o.thesaurus));
}

AugmentConfig augment_config(const Options& o) {
  AugmentConfig c;
  c.synonym_rate = o.synonym_rate;
  c.seed = o.seed;
  c.use_back_translation = !o.no_back_translation;
  c.copies_per_record = o.copies;
  return c;
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig p;
  p.features = o.features;
  p.tfidf = TfidfParams{o.min_df, o.max_features};
  p.embeddings = maybe_embeddings(o);
  p.model = train_config(o);
  p.threshold = o.threshold;
  if (o.augment) p.augment = AugmentStage{augment_config(o), make_translator(o), make_thesaurus(o)};
  return p;
}

std::string row_label(const Options& o) {
  const std::string features = o.features == FeatureKind::Tfidf ? "TF-IDF" : "Embeddings";
  const std::string model = o.model == ModelKind::Linear ? "Logistic Regression" : "Tree Ensemble";
  return features + " & " + model;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  nlohmann::ordered_json j;
  j["records"] = d.size();
  j["jailbreak"] = d.counts().jailbreak;
  j["benign"] = d.counts().benign;
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (auto tag : all_pattern_tags()) {
    if (auto n = d.support(tag)) cats[std::string(to_string(tag))] = n;
  }
  if (auto n = d.support(CategoryTag::Unclassified)) cats["unclassified"] = n;
  j["categories"] = std::move(cats);
  if (!o.out.empty()) save_corpus(d, o.out, o.format);
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_augment(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  const auto augmented = augment_dataset(d, augment_config(o), *make_translator(o), *make_thesaurus(o));
  save_corpus(augmented, o.out, o.format);
  out << "augmented " << d.size() << " -> " << augmented.size() << " records\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  const auto trained = fit_pipeline(d, pipeline_config(o), o.seed);
  const auto body = serialize_model(trained.featurizer, trained.model);
  io::write_file_atomic(o.out, body);
  out << "wrote " << to_string(o.model) << " model (dim " << trained.featurizer.dim() << ") to " << o.out << "\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  const auto report = run_repeated(d, pipeline_config(o), o.runs, o.seed, o.test_fraction, o.jobs);
  if (!o.out.empty()) io::write_file_atomic(o.out, report_to_json(report));
  out << format_table(report, row_label(o));
  return 0;
}

int cmd_novel_eval(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  std::vector<CategoryTag> tags = o.tags;
  if (tags.empty()) tags.assign(default_novel_tags().begin(), default_novel_tags().end());
  const auto report = run_novel(d, tags, pipeline_config(o), o.seed, o.jobs);
  if (!o.out.empty()) io::write_file_atomic(o.out, report_to_json(report));
  out << format_table(report);
  return 0;
}

int cmd_label_categories(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  auto classifier = train_one_vs_all(d, train_config(o), TfidfParams{o.min_df, o.max_features});
  classifier.decision_threshold = o.threshold;
  const auto labeled = label_unlabelled(classifier, d);
  const auto ovr_body = o.ovr_out.empty() ? std::string() : serialize_one_vs_all(classifier);
  save_corpus(labeled, o.out, o.format);
  if (!o.ovr_out.empty()) io::write_file_atomic(o.ovr_out, ovr_body);

  std::size_t machine = 0, unclassified = 0;
  for (const auto& r : labeled) {
    if (!r.machine_labeled) continue;
    ++machine;
    if (r.has_category(CategoryTag::Unclassified)) ++unclassified;
  }
  out << "models: " << classifier.models.size() << ", machine-labeled: " << machine << " (" << unclassified
      << " unclassified)\n";
  for (const auto& s : classifier.skipped) out << "skipped " << to_string(s.tag) << ": " << s.reason << "\n";
  return 0;
}

int cmd_keywords(const Options& o, std::ostream& out) {
  const auto d = load_corpus(o.corpus, o.format);
  const auto model = fit_tfidf(d, TfidfParams{o.min_df, o.max_features});
  const auto jb = extract_keywords(d, Label::Jailbreak, model, o.top_k);
  const auto bn = extract_keywords(d, Label::Benign, model, o.top_k);
  const auto sets = keyword_overlap(jb, bn);
  const std::filesystem::path dir = o.out;
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "jailbreak_keywords.csv", keywords_to_csv(jb));
  io::write_file_atomic(dir / "benign_keywords.csv", keywords_to_csv(bn));
  io::write_file_atomic(dir / "keyword_overlap.json", overlap_to_json(sets));
  out << "jailbreak-only " << sets.jailbreak_only.size() << ", shared " << sets.shared.size() << ", benign-only "
      << sets.benign_only.size() << "\n";
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  // Block termination signals before any server thread starts so a dedicated
  // thread can sigwait for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto models = service::load_models(
      o.artifact, o.ovr_artifact.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.ovr_artifact),
      o.threshold);
  auto engine = std::make_shared<service::ScoringEngine>(std::move(models));
  service::HttpService http(engine);
  const int port = http.bind(o.host, o.port);
  out << "listening on " << o.host << ":" << port << " model " << engine->snapshot()->model.version << std::endl;
  spdlog::info("serving on {}:{}", o.host, port);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, stopping", sig);
    http.stop();
  });
  http.listen();
  // listen() can also return without a signal (stop from elsewhere); wake the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

void init_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("promptgate");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("PROMPTGATE_LOG")) {
    const std::string v = level;
    if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else if (v == "warn") spdlog::set_level(spdlog::level::warn);
  }
}

}  // namespace

std::string_view to_string(Subcommand s) {
  switch (s) {
    case Subcommand::Ingest: return "ingest";
    case Subcommand::Augment: return "augment";
    case Subcommand::Train: return "train";
    case Subcommand::Evaluate: return "evaluate";
    case Subcommand::NovelEval: return "novel-eval";
    case Subcommand::LabelCategories: return "label-categories";
    case Subcommand::Keywords: return "keywords";
    case Subcommand::Serve: return "serve";
  }
  return "";
}

TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.kind = o.model;
  c.epochs = o.epochs;
  c.learning_rate = o.learning_rate;
  c.l2_lambda = o.l2;
  c.n_trees = o.n_trees;
  c.max_depth = o.max_depth;
  c.feature_fraction = o.feature_fraction;
  c.seed = o.seed;
  c.class_weights = o.class_weights;
  return c;
}

CommandSpec parse_args(std::span<const std::string> argv) {
  CommandSpec spec;
  Options& o = spec.options;
  RawFlags raw;

  CLI::App app{"Jailbreak prompt detection toolkit", "promptgate"};
  app.require_subcommand(1, 1);

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and report class counts");
  add_corpus(ingest, o, raw);
  ingest->add_option("--out", o.out, "Write the normalized corpus here");

  auto* augment = app.add_subcommand("augment", "Back-translate then synonym-replace every record");
  add_corpus(augment, o, raw);
  augment->add_option("--out", o.out, "Augmented corpus")->required();
  add_seed(augment, o);
  add_augment(augment, o, false);

  auto* train = app.add_subcommand("train", "Fit features and a classifier on a whole corpus");
  add_corpus(train, o, raw);
  train->add_option("--out", o.out, "Model artifact (JSON)")->required();
  add_seed(train, o);
  add_features(train, o, raw);
  add_model(train, o, raw);
  add_augment(train, o, true);

  auto* evaluate = app.add_subcommand("evaluate", "Repeated random-split evaluation");
  add_corpus(evaluate, o, raw);
  evaluate->add_option("--out", o.out, "Report JSON");
  add_seed(evaluate, o);
  evaluate->add_option("--runs", o.runs, "Independent runs")->check(CLI::Range(2, 1000000));
  evaluate->add_option("--test-fraction", o.test_fraction, "Test share of each split");
  evaluate->add_option("--threshold", o.threshold, "Decision threshold");
  add_jobs(evaluate, o);
  add_features(evaluate, o, raw);
  add_model(evaluate, o, raw);
  add_augment(evaluate, o, true);

  auto* novel = app.add_subcommand("novel-eval", "Leave-one-category-out evaluation");
  add_corpus(novel, o, raw);
  novel->add_option("--out", o.out, "Report JSON");
  add_seed(novel, o);
  novel->add_option("--tags", raw.tags, "Comma-separated categories to hold out");
  novel->add_option("--threshold", o.threshold, "Decision threshold");
  add_jobs(novel, o);
  add_features(novel, o, raw);
  add_model(novel, o, raw);
  add_augment(novel, o, true);

  auto* label = app.add_subcommand("label-categories", "Train one-vs-all models and label uncategorized jailbreaks");
  add_corpus(label, o, raw);
  label->add_option("--out", o.out, "Labeled corpus")->required();
  label->add_option("--ovr-out", o.ovr_out, "One-vs-all artifact (JSON)");
  label->add_option("--threshold", o.threshold, "Per-category decision threshold");
  add_seed(label, o);
  add_model(label, o, raw);
  label->add_option("--min-df", o.min_df, "TF-IDF minimum document frequency")->check(CLI::PositiveNumber);
  label->add_option("--max-features", o.max_features, "TF-IDF vocabulary cap")->check(CLI::PositiveNumber);

  auto* keywords = app.add_subcommand("keywords", "Class-discriminative keywords and their overlap");
  add_corpus(keywords, o, raw);
  keywords->add_option("--out", o.out, "Output directory")->required();
  keywords->add_option("--top-k", o.top_k, "Keywords per class");
  keywords->add_option("--min-df", o.min_df, "TF-IDF minimum document frequency")->check(CLI::PositiveNumber);
  keywords->add_option("--max-features", o.max_features, "TF-IDF vocabulary cap")->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve", "HTTP scoring service");
  serve->add_option("--artifact", o.artifact, "Model artifact")->required();
  serve->add_option("--ovr-artifact", o.ovr_artifact, "One-vs-all artifact");
  serve->add_option("--port", o.port, "TCP port (0 picks a free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--threshold", o.threshold, "Decision threshold");

  const auto usage = app.help();
  if (argv.empty()) throw UsageError("a subcommand is required", usage);

  std::vector<std::string> args(argv.rbegin(), argv.rend());  // CLI11 consumes from the back
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    throw HelpRequested{sub->help()};
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested{app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what(), usage);
  }

  const auto* chosen = app.get_subcommands().front();
  static const std::map<std::string, Subcommand> kNames{
      {"ingest", Subcommand::Ingest},     {"augment", Subcommand::Augment},
      {"train", Subcommand::Train},       {"evaluate", Subcommand::Evaluate},
      {"novel-eval", Subcommand::NovelEval}, {"label-categories", Subcommand::LabelCategories},
      {"keywords", Subcommand::Keywords}, {"serve", Subcommand::Serve}};
  spec.subcommand = kNames.at(chosen->get_name());

  o.format = *parse_corpus_format(raw.format);
  o.model = *parse_model_kind(raw.model);
  o.features = raw.features == "embeddings" ? FeatureKind::Embeddings : FeatureKind::Tfidf;
  if (const auto* ff = chosen->get_option_no_throw("--feature-fraction"); ff && ff->count() > 0) {
    if (!(raw.feature_fraction > 0.0)) throw UsageError("--feature-fraction: must lie in (0, 1]", usage);
    o.feature_fraction = raw.feature_fraction;
  }
  if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) {
    throw UsageError("--test-fraction: must lie strictly between 0 and 1", usage);
  }
  if (!(o.threshold >= 0.0 && o.threshold <= 1.0)) throw UsageError("--threshold: must lie in [0, 1]", usage);
  if (o.features == FeatureKind::Embeddings && o.embeddings.empty()) {
    throw UsageError("--embeddings: required with --features embeddings", usage);
  }
  if (o.features == FeatureKind::Embeddings && o.augment) {
    throw UsageError("--augment: cannot be combined with --features embeddings", usage);
  }
  if (!raw.tags.empty()) o.tags = parse_tags(raw.tags, usage);
  return spec;
}

int execute(const CommandSpec& spec, std::ostream& out, std::ostream& err) {
  init_logging();
  const auto& o = spec.options;
  try {
    switch (spec.subcommand) {
      case Subcommand::Ingest: return cmd_ingest(o, out);
      case Subcommand::Augment: return cmd_augment(o, out);
      case Subcommand::Train: return cmd_train(o, out);
      case Subcommand::Evaluate: return cmd_evaluate(o, out);
      case Subcommand::NovelEval: return cmd_novel_eval(o, out);
      case Subcommand::LabelCategories: return cmd_label_categories(o, out);
      case Subcommand::Keywords: return cmd_keywords(o, out);
      case Subcommand::Serve: return cmd_serve(o, out);
    }
  } catch (const std::exception& e) {
    err << module_error(e) << "\n";
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CommandSpec spec;
  try {
    spec = parse_args(args);
  } catch (const HelpRequested& h) {
    std::cout << h.text;
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "promptgate: usage error: " << e.what() << "\n\n" << e.usage();
    return 2;
  }
  return execute(spec, std::cout, std::cerr);
}

}  // namespace promptgate::cli
