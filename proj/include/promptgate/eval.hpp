#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptgate/augment.hpp"
#include "promptgate/corpus.hpp"
#include "promptgate/features.hpp"
#include "promptgate/models.hpp"

namespace promptgate {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Jailbreak (1) is the positive class; score >= threshold predicts positive.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

struct Rates {
  double accuracy = 0.0;
  /// fn / (tp + fn); absent when tp + fn == 0.
  std::optional<double> fnr;
  /// tp / (tp + fn); absent when tp + fn == 0.
  std::optional<double> tpr;
};

Rates metrics_from_counts(const ConfusionCounts& c);

/// Mann-Whitney AUC with ties counted one half, computed exactly from
/// doubled integer ranks.
double auc(std::span<const double> scores, std::span<const int> labels);

struct MetricReport {
  double auc = 0.0;
  double accuracy = 0.0;
  std::optional<double> fnr;
  std::optional<double> tpr;
  ConfusionCounts counts;
};

MetricReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation
  std::size_t n = 0;
};

/// Mean and sample standard deviation in a fixed summation order.
MetricSummary summarize(std::span<const double> values);

struct RepeatedRunReport {
  std::size_t n_runs = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> runs;
  MetricSummary auc, accuracy, fnr, tpr;
};

struct NovelEvalEntry {
  CategoryTag tag;
  MetricReport metrics;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t test_jailbreaks = 0;
  std::size_t test_benign = 0;
  /// Training records carrying the held tag; the protocol requires 0.
  std::size_t train_records_with_tag = 0;
};

struct NovelEvalReport {
  std::vector<NovelEvalEntry> entries;  // in requested tag order
};

/// Optional training-side augmentation. Test partitions are never augmented.
struct AugmentStage {
  AugmentConfig config;
  std::shared_ptr<const Translator> translator;
  std::shared_ptr<const Thesaurus> thesaurus;
};

struct PipelineConfig {
  FeatureKind features = FeatureKind::Tfidf;
  TfidfParams tfidf;
  std::shared_ptr<const EmbeddingTable> embeddings;  // required for FeatureKind::Embeddings
  TrainConfig model;
  double threshold = 0.5;
  std::optional<AugmentStage> augment;
};

struct TrainedPipeline {
  Featurizer featurizer;
  BinaryModel model;

  std::vector<double> score(const Dataset& d) const;
};

/// Fits features on `train` only (after optional augmentation), then the
/// classifier, both seeded with `seed`.
TrainedPipeline fit_pipeline(const Dataset& train, const PipelineConfig& cfg, std::uint64_t seed);

std::vector<int> binary_labels(const Dataset& d);

/// Run i uses seed base_seed + i for both its split and its training.
/// `jobs` caps worker threads; results do not depend on it.
RepeatedRunReport run_repeated(const Dataset& d, const PipelineConfig& cfg, std::size_t n_runs,
                               std::uint64_t base_seed, double test_fraction, std::size_t jobs = 1);

NovelEvalReport run_novel(const Dataset& d, std::span<const CategoryTag> tags, const PipelineConfig& cfg,
                          std::uint64_t seed, std::size_t jobs = 1);

std::string report_to_json(const RepeatedRunReport& r);
std::string report_to_json(const NovelEvalReport& r);

/// Mean/Std table with AUC, Accuracy, FNR and TPR columns.
std::string format_table(const RepeatedRunReport& r, std::string_view row_label);
/// One row per held-out category.
std::string format_table(const NovelEvalReport& r);

/// Runs fn(0..n-1) on up to `jobs` threads and rethrows the failure with the
/// lowest index, prefixed by `what` and the index.
void parallel_for(std::size_t n, std::size_t jobs, std::string_view what, const std::function<void(std::size_t)>& fn);

}  // namespace promptgate
