#include <catch_amalgamated.hpp>

#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "promptgate/cli.hpp"
#include "promptgate/io.hpp"
#include "synthetic.hpp"

using namespace promptgate;
using namespace promptgate::cli;
using json = nlohmann::json;
using promptgate::testing::TempDir;

namespace {

CommandSpec parse(std::vector<std::string> args) { return parse_args(args); }

std::string usage_error(std::vector<std::string> args) {
  try {
    parse_args(args);
  } catch (const UsageError& e) {
    CHECK_FALSE(e.usage().empty());
    return e.what();
  }
  FAIL("expected a usage error");
  return {};
}

// Runs the built binary and returns its exit status.
int run_binary(const std::string& args, const TempDir& dir) {
  const std::string cmd = std::string(PROMPTGATE_BIN) + " " + args + " >" + (dir / "stdout.txt").string() + " 2>" +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path write_corpus(const TempDir& dir) {
  const auto d = promptgate::testing::make_synthetic({.n_records = 400, .jailbreak_fraction = 0.2, .seed = 2});
  const auto path = dir / "corpus.jsonl";
  save_corpus(d, path, CorpusFormat::Jsonl);
  return path;
}

}  // namespace

TEST_CASE("evaluate arguments parse into a command spec") {
  const auto spec = parse({"evaluate", "--corpus", "c.jsonl", "--runs", "30"});
  CHECK(spec.subcommand == Subcommand::Evaluate);
  CHECK(spec.options.runs == 30);
  CHECK(spec.options.corpus == "c.jsonl");
  CHECK(spec.options.test_fraction == 0.2);

  const auto full = parse({"evaluate", "--corpus", "c.csv", "--format", "csv", "--model", "ensemble", "--seed", "9",
                           "--feature-fraction", "0.5", "--jobs", "3"});
  CHECK(full.options.format == CorpusFormat::Csv);
  CHECK(full.options.model == ModelKind::Ensemble);
  CHECK(full.options.seed == 9);
  CHECK(full.options.feature_fraction == 0.5);
  CHECK(train_config(full.options).kind == ModelKind::Ensemble);

  const auto novel = parse({"novel-eval", "--corpus", "c", "--tags", "sudo_mode,ethical_appeal"});
  CHECK(novel.options.tags == std::vector<CategoryTag>{CategoryTag::SudoMode, CategoryTag::EthicalAppeal});
}

TEST_CASE("bad invocations are usage errors naming the flag") {
  CHECK(usage_error({"evaluate", "--runs", "abc"}).find("--runs") != std::string::npos);
  CHECK_FALSE(usage_error({}).empty());
  usage_error({"frobnicate"});
  usage_error({"evaluate", "--corpus", "c", "--bogus"});
  CHECK(usage_error({"evaluate", "--corpus", "c", "--model", "svm"}).find("--model") != std::string::npos);
  CHECK(usage_error({"evaluate", "--corpus", "c", "--test-fraction", "1.5"}).find("--test-fraction") !=
        std::string::npos);
  CHECK(usage_error({"novel-eval", "--corpus", "c", "--tags", "sudo_mode,nope"}).find("--tags") != std::string::npos);
  CHECK(usage_error({"train", "--corpus", "c", "--out", "m", "--features", "embeddings"}).find("--embeddings") !=
        std::string::npos);
  CHECK_THROWS_AS(parse({"train", "--help"}), HelpRequested);
}

TEST_CASE("binary exit codes") {
  TempDir dir;
  CHECK(run_binary("", dir) == 2);
  CHECK(run_binary("evaluate --runs abc", dir) == 2);
  CHECK(run_binary("--help", dir) == 0);

  const auto out = dir / "report.json";
  CHECK(run_binary("evaluate --corpus " + (dir / "absent.jsonl").string() + " --out " + out.string(), dir) == 1);
  CHECK_FALSE(std::filesystem::exists(out));
  CHECK(io::read_file(dir / "stderr.txt").rfind("promptgate: ", 0) == 0);
}

TEST_CASE("evaluate writes a report with one entry per run") {
  TempDir dir;
  const auto corpus = write_corpus(dir);
  const auto out = dir / "report.json";
  REQUIRE(run_binary("evaluate --corpus " + corpus.string() + " --runs 30 --jobs 4 --out " + out.string(), dir) == 0);
  const auto report = json::parse(io::read_file(out));
  CHECK(report["runs"].size() == 30);
  CHECK(io::read_file(dir / "stdout.txt").find("TF-IDF & Logistic Regression") != std::string::npos);
}

TEST_CASE("novel-eval defaults to the five held-out categories") {
  TempDir dir;
  const auto d = promptgate::testing::make_synthetic({.n_records = 800, .jailbreak_fraction = 0.2, .seed = 5});
  save_corpus(d, dir / "c.jsonl", CorpusFormat::Jsonl);
  const auto spec = parse({"novel-eval", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "n.json").string()});
  std::ostringstream out, err;
  REQUIRE(execute(spec, out, err) == 0);
  const auto report = json::parse(io::read_file(dir / "n.json"));
  std::vector<std::string> tags;
  for (const auto& e : report["entries"]) tags.push_back(e["category"]);
  CHECK(tags == std::vector<std::string>{"character_roleplay", "superior_model", "sudo_mode", "simulate_jailbreaking",
                                         "ethical_appeal"});
}

TEST_CASE("ingest, augment, train, label and keywords run end to end") {
  TempDir dir;
  const auto corpus = write_corpus(dir);
  std::ostringstream out, err;
  auto exec = [&](std::vector<std::string> args) { return execute(parse_args(args), out, err); };

  REQUIRE(exec({"ingest", "--corpus", corpus.string(), "--out", (dir / "norm.csv").string(), "--format", "jsonl"}) == 0);
  CHECK(out.str().find("\"jailbreak\": 80") != std::string::npos);

  REQUIRE(exec({"augment", "--corpus", corpus.string(), "--out", (dir / "aug.jsonl").string(), "--seed", "3"}) == 0);
  CHECK(load_corpus(dir / "aug.jsonl", CorpusFormat::Jsonl).size() == 800);

  REQUIRE(exec({"train", "--corpus", corpus.string(), "--out", (dir / "m.json").string(), "--model", "ensemble",
                "--n-trees", "10"}) == 0);
  CHECK(json::parse(io::read_file(dir / "m.json"))["kind"] == "ensemble");

  REQUIRE(exec({"label-categories", "--corpus", corpus.string(), "--out", (dir / "lab.jsonl").string(), "--ovr-out",
                (dir / "ovr.json").string()}) == 0);
  CHECK(json::parse(io::read_file(dir / "ovr.json"))["kind"] == "one_vs_all");

  REQUIRE(exec({"keywords", "--corpus", corpus.string(), "--out", (dir / "kw").string(), "--top-k", "20"}) == 0);
  CHECK(io::read_file(dir / "kw" / "jailbreak_keywords.csv").rfind("term,score,class_doc_freq\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "kw" / "keyword_overlap.json"));
}
