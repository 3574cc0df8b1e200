#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptgate/corpus.hpp"
#include "promptgate/features.hpp"
#include "promptgate/models.hpp"

namespace promptgate::cli {

enum class Subcommand { Ingest, Augment, Train, Evaluate, NovelEval, LabelCategories, Keywords, Serve };

std::string_view to_string(Subcommand s);

struct Options {
  std::string corpus;
  CorpusFormat format = CorpusFormat::Jsonl;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t runs = 30;
  double test_fraction = 0.2;
  ModelKind model = ModelKind::Linear;
  FeatureKind features = FeatureKind::Tfidf;
  std::string embeddings;
  std::string thesaurus;
  std::string rewrites;
  double synonym_rate = 0.1;
  bool no_back_translation = false;
  std::size_t copies = 1;
  bool augment = false;
  std::size_t top_k = 100;
  double threshold = 0.5;
  std::size_t jobs = 1;
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string artifact;
  std::string ovr_artifact;
  std::string ovr_out;
  std::vector<CategoryTag> tags;
  std::size_t min_df = 2;
  std::size_t max_features = 20000;
  std::size_t epochs = 50;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::size_t n_trees = 200;
  std::size_t max_depth = 12;
  std::optional<double> feature_fraction;
  bool class_weights = false;
};

struct CommandSpec {
  Subcommand subcommand = Subcommand::Ingest;
  Options options;
};

/// Bad invocation; exit code 2. what() names the offending flag.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& message, std::string usage)
      : std::runtime_error(message), usage_(std::move(usage)) {}
  const std::string& usage() const noexcept { return usage_; }

 private:
  std::string usage_;
};

/// --help was given; the caller prints text and exits 0.
struct HelpRequested {
  std::string text;
};

/// argv excludes the program name. Throws UsageError or HelpRequested.
CommandSpec parse_args(std::span<const std::string> argv);

/// Runs a validated command. Returns 0 on success and 1 on runtime failure
/// (diagnostic written to err). serve blocks until SIGINT/SIGTERM.
int execute(const CommandSpec& spec, std::ostream& out, std::ostream& err);

/// parse_args + execute with exit codes 0 / 1 / 2.
int run(int argc, const char* const* argv);

TrainConfig train_config(const Options& o);

}  // namespace promptgate::cli
