#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "promptgate/corpus.hpp"
#include "promptgate/features.hpp"

namespace promptgate {

enum class ModelKind { Linear, Ensemble };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);

struct TrainConfig {
  ModelKind kind = ModelKind::Linear;
  // logistic regression
  std::size_t epochs = 50;
  double learning_rate = 0.1;  // decays as lr / sqrt(epoch + 1)
  double l2_lambda = 1e-4;
  // tree ensemble
  std::size_t n_trees = 200;
  std::size_t max_depth = 12;
  /// Split candidates per node = max(1, round(fraction * dim)); unset means
  /// round(sqrt(dim)).
  std::optional<double> feature_fraction;
  std::uint64_t seed = 0;
  /// Inverse-frequency class weights n / (2 * n_class).
  bool class_weights = false;

  /// Throws Error(InvalidArgument) on non-positive rates or fractions outside (0, 1].
  void validate() const;
};

struct LinearTrainMeta {
  std::size_t epochs = 0;
  double learning_rate = 0.0;
  double l2_lambda = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const LinearTrainMeta&) const = default;
};

class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(std::vector<double> weights, double bias, LinearTrainMeta meta = {});

  std::size_t dim() const noexcept { return weights_.size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const LinearTrainMeta& meta() const noexcept { return meta_; }

  double decision(const FeatureVector& x) const;
  /// sigmoid(w.x + b), kept inside the open interval (0, 1).
  double predict_proba(const FeatureVector& x) const;

  bool operator==(const LinearModel&) const = default;

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  LinearTrainMeta meta_;
};

double sigmoid(double z);

/// Mean weighted log-loss plus (l2_lambda / 2) * |w|^2 (bias unpenalized).
double logistic_loss(std::span<const FeatureVector> X, std::span<const int> y, std::span<const double> weights,
                     double bias, double l2_lambda, std::span<const double> sample_weights = {});

/// Gradient of logistic_loss; the last element is d/d(bias).
std::vector<double> logistic_gradient(std::span<const FeatureVector> X, std::span<const int> y,
                                      std::span<const double> weights, double bias, double l2_lambda,
                                      std::span<const double> sample_weights = {});

/// Seeded SGD with per-epoch shuffling. When epoch_losses is given it
/// receives logistic_loss after every epoch.
LinearModel train_logistic(std::span<const FeatureVector> X, std::span<const int> y, const TrainConfig& cfg,
                           std::vector<double>* epoch_losses = nullptr);

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // value <= threshold goes left
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;         // positive-class fraction at the node
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(const FeatureVector& x) const;
  bool operator==(const DecisionTree&) const = default;
};

class TreeEnsembleModel {
 public:
  TreeEnsembleModel() = default;
  TreeEnsembleModel(std::vector<DecisionTree> trees, std::size_t dim, std::size_t max_depth, std::uint64_t seed);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_trees() const noexcept { return trees_.size(); }
  std::size_t max_depth() const noexcept { return max_depth_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

  /// Mean of the leaf values reached in each tree.
  double predict_proba(const FeatureVector& x) const;

  bool operator==(const TreeEnsembleModel&) const = default;

 private:
  std::vector<DecisionTree> trees_;
  std::size_t dim_ = 0;
  std::size_t max_depth_ = 0;
  std::uint64_t seed_ = 0;
};

/// Extremely randomized trees: at each node, K features drawn without
/// replacement from those not constant in the node, one uniform threshold
/// each in [min, max), best by Gini decrease. Tree t uses stream
/// derive_seed(seed, t).
TreeEnsembleModel train_tree_ensemble(std::span<const FeatureVector> X, std::span<const int> y,
                                      const TrainConfig& cfg);

using BinaryModel = std::variant<LinearModel, TreeEnsembleModel>;

std::size_t model_dim(const BinaryModel& m);
double predict_proba(const BinaryModel& m, const FeatureVector& x);
BinaryModel train_binary(std::span<const FeatureVector> X, std::span<const int> y, const TrainConfig& cfg);

struct SkippedCategory {
  CategoryTag tag;
  std::string reason;
  bool operator==(const SkippedCategory&) const = default;
};

struct OneVsAllClassifier {
  Featurizer featurizer;
  std::map<CategoryTag, BinaryModel> models;
  double decision_threshold = 0.5;
  std::map<CategoryTag, double> threshold_overrides;
  std::vector<SkippedCategory> skipped;

  double threshold_for(CategoryTag tag) const;
  /// Per-category score for every modelled category.
  std::map<CategoryTag, double> scores(const PromptRecord& record) const;
  std::map<CategoryTag, double> scores(const FeatureVector& x) const;
};

/// Human-labeled jailbreaks with at least one pattern tag.
Dataset labeled_jailbreaks(const Dataset& d);

/// One binary model per pattern tag with >= 2 positives (and >= 1 negative)
/// among the labeled jailbreaks of d. Tags without support are listed in
/// `skipped` rather than failing.
OneVsAllClassifier train_one_vs_all(const Dataset& d, const Featurizer& featurizer, const TrainConfig& cfg);
/// As above, fitting a TF-IDF featurizer on the labeled jailbreaks first.
OneVsAllClassifier train_one_vs_all(const Dataset& d, const TrainConfig& cfg, const TfidfParams& tfidf = {});

/// Jailbreaks without categories receive every category scoring at or above
/// its threshold, or {unclassified}, and are flagged machine_labeled. All
/// other records pass through unchanged.
Dataset label_unlabelled(const OneVsAllClassifier& c, const Dataset& d);

/// Fraction of (record, tag) decisions that match the true tags, per tag.
std::map<CategoryTag, double> per_label_accuracy(const OneVsAllClassifier& c, const Dataset& labeled);

}  // namespace promptgate
