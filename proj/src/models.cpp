#include "promptgate/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::string_view kModule = "models";

void check_training_set(std::span<const FeatureVector> X, std::span<const int> y, std::size_t& dim) {
  if (X.size() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, kModule,
                std::to_string(X.size()) + " feature rows but " + std::to_string(y.size()) + " labels");
  }
  if (X.empty()) throw Error(ErrorCode::SingleClassData, kModule, "no training rows");
  dim = X.front().dim;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].dim != dim) {
      throw Error(ErrorCode::DimensionMismatch, kModule,
                  "row " + std::to_string(i) + " has dim " + std::to_string(X[i].dim) + ", expected " +
                      std::to_string(dim));
    }
    if (y[i] != 0 && y[i] != 1) throw Error(ErrorCode::InvalidArgument, kModule, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(y[i]);
  }
  if (pos == 0 || pos == X.size() || X.size() < 2) {
    throw Error(ErrorCode::SingleClassData, kModule, "training data must contain both classes");
  }
}

std::vector<double> class_weight_vector(std::span<const int> y, bool enabled) {
  std::vector<double> w(y.size(), 1.0);
  if (!enabled) return w;
  const auto n = static_cast<double>(y.size());
  const auto pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double wp = n / (2.0 * pos), wn = n / (2.0 * (n - pos));
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = y[i] ? wp : wn;
  return w;
}

double dot(std::span<const double> w, const FeatureVector& x) {
  double z = 0.0;
  for (const auto& e : x.entries) z += w[e.index] * e.value;
  return z;
}

std::size_t candidates_per_node(const TrainConfig& cfg, std::size_t dim) {
  const double raw = cfg.feature_fraction ? *cfg.feature_fraction * static_cast<double>(dim)
                                          : std::sqrt(static_cast<double>(dim));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(raw)));
}

// ---- tree growing --------------------------------------------------------

struct Posting {
  std::uint32_t row;
  double value;
};

class TreeGrower {
 public:
  TreeGrower(std::span<const FeatureVector> X, std::span<const int> y, std::span<const double> weights,
             std::size_t dim, std::size_t max_depth, std::size_t k)
      : X_(X), y_(y), w_(weights), dim_(dim), max_depth_(max_depth), k_(k), columns_(dim),
        stamp_(dim, 0), count_(dim, 0), min_(dim, 0.0), max_(dim, 0.0), node_of_(X.size(), 0) {
    for (std::uint32_t i = 0; i < X.size(); ++i) {
      for (const auto& e : X[i].entries) columns_[e.index].push_back({i, e.value});
    }
  }

  DecisionTree grow(Rng& rng) {
    DecisionTree tree;
    std::vector<std::uint32_t> all(X_.size());
    std::iota(all.begin(), all.end(), 0u);

    struct Pending {
      std::uint32_t node;
      std::vector<std::uint32_t> rows;
      std::size_t depth;
    };
    std::vector<Pending> stack;
    tree.nodes.push_back({});
    stack.push_back({0, std::move(all), 0});
    while (!stack.empty()) {
      auto item = std::move(stack.back());
      stack.pop_back();
      auto split = try_split(item.rows, item.depth, rng, tree.nodes[item.node]);
      if (!split) continue;
      auto& [left_rows, right_rows] = *split;
      const auto left = static_cast<std::uint32_t>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      tree.nodes[item.node].left = left;
      tree.nodes[item.node].right = left + 1;
      // Right pushed first so the left subtree is grown first.
      stack.push_back({left + 1, std::move(right_rows), item.depth + 1});
      stack.push_back({left, std::move(left_rows), item.depth + 1});
    }
    return tree;
  }

 private:
  using Rows = std::vector<std::uint32_t>;

  std::optional<std::pair<Rows, Rows>> try_split(const Rows& rows, std::size_t depth,
                                                 Rng& rng, TreeNode& node) {
    double wpos = 0.0, wall = 0.0;
    for (auto r : rows) {
      wall += w_[r];
      if (y_[r]) wpos += w_[r];
    }
    node.feature = -1;
    node.value = wall > 0.0 ? wpos / wall : 0.0;
    const bool pure = wpos == 0.0 || wpos == wall;
    if (depth >= max_depth_ || pure || rows.size() < 2) return std::nullopt;

    // Non-constant features in this node, ascending by index.
    const std::uint32_t stamp = ++epoch_;
    std::vector<std::uint32_t> touched;
    for (auto r : rows) {
      node_of_[r] = stamp;
      for (const auto& e : X_[r].entries) {
        if (stamp_[e.index] != stamp) {
          stamp_[e.index] = stamp;
          count_[e.index] = 0;
          min_[e.index] = max_[e.index] = e.value;
          touched.push_back(e.index);
        }
        ++count_[e.index];
        min_[e.index] = std::min(min_[e.index], e.value);
        max_[e.index] = std::max(max_[e.index], e.value);
      }
    }
    std::vector<std::uint32_t> candidates;
    for (auto f : touched) {
      if (count_[f] < rows.size()) {
        min_[f] = std::min(min_[f], 0.0);
        max_[f] = std::max(max_[f], 0.0);
      }
      if (min_[f] < max_[f]) candidates.push_back(f);
    }
    if (candidates.empty()) return std::nullopt;
    std::sort(candidates.begin(), candidates.end());

    const std::size_t k = std::min(k_, candidates.size());
    double best_gain = -std::numeric_limits<double>::infinity();
    std::uint32_t best_feature = 0;
    double best_threshold = 0.0;
    const double parent_gini = gini(wpos, wall);
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.uniform_index(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
      const auto f = candidates[i];
      const double lo = min_[f], hi = max_[f];
      double threshold = lo + rng.uniform_unit() * (hi - lo);
      if (!(threshold < hi)) threshold = lo;

      double left_pos = 0.0, left_all = 0.0;
      accumulate_left(f, threshold, rows, stamp, wpos, wall, left_pos, left_all);
      const double right_pos = wpos - left_pos, right_all = wall - left_all;
      const double gain = parent_gini - (left_all * gini(left_pos, left_all) + right_all * gini(right_pos, right_all)) / wall;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = threshold;
      }
    }

    Rows left, right;
    for (auto r : rows) {
      (X_[r].value_at(best_feature) <= best_threshold ? left : right).push_back(r);
    }
    node.feature = static_cast<std::int32_t>(best_feature);
    node.threshold = best_threshold;
    return std::make_pair(std::move(left), std::move(right));
  }

  // Weighted (positive, total) mass on the `<= threshold` side.
  void accumulate_left(std::uint32_t f, double threshold, const Rows& rows, std::uint32_t stamp, double node_pos,
                       double node_all, double& pos, double& all) const {
    const auto& column = columns_[f];
    if (column.size() <= rows.size() * 4) {
      // Walk the column; rows absent from it hold 0.
      double nz_pos = 0.0, nz_all = 0.0, nz_left_pos = 0.0, nz_left_all = 0.0;
      for (const auto& p : column) {
        if (node_of_[p.row] != stamp) continue;
        const double w = w_[p.row];
        nz_all += w;
        if (y_[p.row]) nz_pos += w;
        if (p.value <= threshold) {
          nz_left_all += w;
          if (y_[p.row]) nz_left_pos += w;
        }
      }
      pos = nz_left_pos;
      all = nz_left_all;
      if (0.0 <= threshold) {
        pos += node_pos - nz_pos;
        all += node_all - nz_all;
      }
      return;
    }
    pos = all = 0.0;
    for (auto r : rows) {
      if (X_[r].value_at(f) <= threshold) {
        all += w_[r];
        if (y_[r]) pos += w_[r];
      }
    }
  }

  static double gini(double pos, double all) {
    if (all <= 0.0) return 0.0;
    const double p = pos / all;
    return 2.0 * p * (1.0 - p);
  }

  std::span<const FeatureVector> X_;
  std::span<const int> y_;
  std::span<const double> w_;
  std::size_t dim_;
  std::size_t max_depth_;
  std::size_t k_;
  std::vector<std::vector<Posting>> columns_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::size_t> count_;
  std::vector<double> min_, max_;
  std::vector<std::uint32_t> node_of_;
  std::uint32_t epoch_ = 0;
};

}  // namespace

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Linear ? "linear" : "ensemble"; }

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  if (text == "linear") return ModelKind::Linear;
  if (text == "ensemble") return ModelKind::Ensemble;
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, kModule, what); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be positive");
  if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) bad("l2_lambda must be non-negative");
  if (learning_rate * l2_lambda >= 1.0) bad("learning_rate * l2_lambda must be below 1");
  if (n_trees == 0) bad("n_trees must be positive");
  if (max_depth == 0) bad("max_depth must be positive");
  if (feature_fraction && !(*feature_fraction > 0.0 && *feature_fraction <= 1.0)) {
    bad("feature fraction must lie in (0, 1]");
  }
}

double sigmoid(double z) {
  double p;
  if (z >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    p = e / (1.0 + e);
  }
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

LinearModel::LinearModel(std::vector<double> weights, double bias, LinearTrainMeta meta)
    : weights_(std::move(weights)), bias_(bias), meta_(meta) {
  if (!std::isfinite(bias_) || !std::all_of(weights_.begin(), weights_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::MalformedArtifact, kModule, "linear model has non-finite parameters");
  }
}

double LinearModel::decision(const FeatureVector& x) const {
  if (x.dim != weights_.size()) {
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "feature dim " + std::to_string(x.dim) + " != model dim " + std::to_string(weights_.size()));
  }
  return dot(weights_, x) + bias_;
}

double LinearModel::predict_proba(const FeatureVector& x) const { return sigmoid(decision(x)); }

double logistic_loss(std::span<const FeatureVector> X, std::span<const int> y, std::span<const double> weights,
                     double bias, double l2_lambda, std::span<const double> sample_weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double z = dot(weights, X[i]) + bias;
    const double margin = y[i] ? z : -z;
    // log(1 + exp(-margin)), stable for both signs
    const double l = margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
    total += (sample_weights.empty() ? 1.0 : sample_weights[i]) * l;
  }
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return total / static_cast<double>(X.size()) + 0.5 * l2_lambda * sq;
}

std::vector<double> logistic_gradient(std::span<const FeatureVector> X, std::span<const int> y,
                                      std::span<const double> weights, double bias, double l2_lambda,
                                      std::span<const double> sample_weights) {
  std::vector<double> g(weights.size() + 1, 0.0);
  const double inv_n = 1.0 / static_cast<double>(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double c = sample_weights.empty() ? 1.0 : sample_weights[i];
    const double r = c * (sigmoid(dot(weights, X[i]) + bias) - y[i]) * inv_n;
    for (const auto& e : X[i].entries) g[e.index] += r * e.value;
    g.back() += r;
  }
  for (std::size_t j = 0; j < weights.size(); ++j) g[j] += l2_lambda * weights[j];
  return g;
}

LinearModel train_logistic(std::span<const FeatureVector> X, std::span<const int> y, const TrainConfig& cfg,
                           std::vector<double>* epoch_losses) {
  cfg.validate();
  std::size_t dim = 0;
  check_training_set(X, y, dim);
  const auto sample_w = class_weight_vector(y, cfg.class_weights);

  // Weights are stored as scale * v so the per-step L2 shrink is O(1).
  std::vector<double> v(dim, 0.0);
  double scale = 1.0;
  double bias = 0.0;
  std::vector<std::size_t> order(X.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  auto materialize = [&] {
    std::vector<double> w(v);
    for (auto& x : w) x *= scale;
    return w;
  };

  if (epoch_losses) epoch_losses->clear();
  if (cfg.epochs == 0) return LinearModel(materialize(), bias, {cfg.epochs, cfg.learning_rate, cfg.l2_lambda, cfg.seed});

  // An epoch that raises the full training loss is rolled back, so the loss
  // at epoch boundaries never increases; the next epoch retries from the last
  // accepted point with a smaller step and a fresh shuffle.
  double accepted_loss = logistic_loss(X, y, materialize(), bias, cfg.l2_lambda, sample_w);
  std::vector<double> accepted_v = v;
  double accepted_scale = scale;
  double accepted_bias = bias;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = cfg.learning_rate / std::sqrt(static_cast<double>(epoch + 1));
    for (auto i : order) {
      const auto& x = X[i];
      const double z = scale * dot(v, x) + bias;
      const double g = sample_w[i] * (sigmoid(z) - y[i]);
      scale *= 1.0 - lr * cfg.l2_lambda;
      const double step = lr * g / scale;
      for (const auto& e : x.entries) v[e.index] -= step * e.value;
      bias -= lr * g;
      if (scale < 1e-9) {
        for (auto& w : v) w *= scale;
        scale = 1.0;
      }
    }
    const double loss = logistic_loss(X, y, materialize(), bias, cfg.l2_lambda, sample_w);
    if (loss <= accepted_loss) {
      accepted_loss = loss;
      accepted_v = v;
      accepted_scale = scale;
      accepted_bias = bias;
    } else {
      v = accepted_v;
      scale = accepted_scale;
      bias = accepted_bias;
    }
    if (epoch_losses) epoch_losses->push_back(accepted_loss);
  }
  return LinearModel(materialize(), bias, {cfg.epochs, cfg.learning_rate, cfg.l2_lambda, cfg.seed});
}

double DecisionTree::predict(const FeatureVector& x) const {
  std::uint32_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = x.value_at(static_cast<std::uint32_t>(n.feature)) <= n.threshold ? n.left : n.right;
  }
  return nodes[i].value;
}

TreeEnsembleModel::TreeEnsembleModel(std::vector<DecisionTree> trees, std::size_t dim, std::size_t max_depth,
                                     std::uint64_t seed)
    : trees_(std::move(trees)), dim_(dim), max_depth_(max_depth), seed_(seed) {
  if (trees_.empty()) throw Error(ErrorCode::MalformedArtifact, kModule, "ensemble has no trees");
  for (const auto& t : trees_) {
    if (t.nodes.empty()) throw Error(ErrorCode::MalformedArtifact, kModule, "empty tree");
    for (const auto& n : t.nodes) {
      if (!(n.value >= 0.0 && n.value <= 1.0)) {
        throw Error(ErrorCode::MalformedArtifact, kModule, "leaf value outside [0, 1]");
      }
      if (n.feature >= 0 && (static_cast<std::size_t>(n.feature) >= dim_ || n.left >= t.nodes.size() ||
                             n.right >= t.nodes.size() || !std::isfinite(n.threshold))) {
        throw Error(ErrorCode::MalformedArtifact, kModule, "tree node out of range");
      }
    }
  }
}

double TreeEnsembleModel::predict_proba(const FeatureVector& x) const {
  if (x.dim != dim_) {
    throw Error(ErrorCode::DimensionMismatch, kModule,
                "feature dim " + std::to_string(x.dim) + " != model dim " + std::to_string(dim_));
  }
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.predict(x);
  return sum / static_cast<double>(trees_.size());
}

TreeEnsembleModel train_tree_ensemble(std::span<const FeatureVector> X, std::span<const int> y,
                                      const TrainConfig& cfg) {
  cfg.validate();
  std::size_t dim = 0;
  check_training_set(X, y, dim);
  const auto sample_w = class_weight_vector(y, cfg.class_weights);
  TreeGrower grower(X, y, sample_w, dim, cfg.max_depth, candidates_per_node(cfg, dim));
  std::vector<DecisionTree> trees;
  trees.reserve(cfg.n_trees);
  for (std::size_t t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    trees.push_back(grower.grow(rng));
  }
  return TreeEnsembleModel(std::move(trees), dim, cfg.max_depth, cfg.seed);
}

std::size_t model_dim(const BinaryModel& m) {
  return std::visit([](const auto& model) { return model.dim(); }, m);
}

double predict_proba(const BinaryModel& m, const FeatureVector& x) {
  return std::visit([&](const auto& model) { return model.predict_proba(x); }, m);
}

BinaryModel train_binary(std::span<const FeatureVector> X, std::span<const int> y, const TrainConfig& cfg) {
  if (cfg.kind == ModelKind::Linear) return train_logistic(X, y, cfg);
  return train_tree_ensemble(X, y, cfg);
}

// ---- one-vs-all ----------------------------------------------------------

double OneVsAllClassifier::threshold_for(CategoryTag tag) const {
  auto it = threshold_overrides.find(tag);
  return it == threshold_overrides.end() ? decision_threshold : it->second;
}

std::map<CategoryTag, double> OneVsAllClassifier::scores(const FeatureVector& x) const {
  std::map<CategoryTag, double> out;
  for (const auto& [tag, model] : models) out.emplace(tag, predict_proba(model, x));
  return out;
}

std::map<CategoryTag, double> OneVsAllClassifier::scores(const PromptRecord& record) const {
  return scores(featurizer.featurize(record));
}

Dataset labeled_jailbreaks(const Dataset& d) {
  std::vector<PromptRecord> out;
  for (const auto& r : d) {
    if (r.label != Label::Jailbreak || r.machine_labeled) continue;
    const bool has_pattern =
        std::any_of(r.categories.begin(), r.categories.end(), [](CategoryTag t) { return t != CategoryTag::Unclassified; });
    if (has_pattern) out.push_back(r);
  }
  return Dataset(std::move(out));
}

OneVsAllClassifier train_one_vs_all(const Dataset& d, const Featurizer& featurizer, const TrainConfig& cfg) {
  const auto labeled = labeled_jailbreaks(d);
  OneVsAllClassifier c{featurizer, {}, 0.5, {}, {}};
  const auto X = featurizer.featurize(labeled);
  for (auto tag : all_pattern_tags()) {
    std::vector<int> y;
    y.reserve(labeled.size());
    for (const auto& r : labeled) y.push_back(r.has_category(tag) ? 1 : 0);
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos == 0) continue;
    if (pos < 2 || pos == y.size()) {
      c.skipped.push_back({tag, Error(ErrorCode::InsufficientSupport, kModule,
                                      std::string(to_string(tag)) + " has " + std::to_string(pos) +
                                          " positives among " + std::to_string(y.size()) + " labeled jailbreaks")
                                    .what()});
      continue;
    }
    TrainConfig member = cfg;
    member.seed = derive_seed(cfg.seed, to_string(tag));
    c.models.emplace(tag, train_binary(X, y, member));
  }
  return c;
}

OneVsAllClassifier train_one_vs_all(const Dataset& d, const TrainConfig& cfg, const TfidfParams& tfidf) {
  const auto labeled = labeled_jailbreaks(d);
  if (labeled.empty()) {
    throw Error(ErrorCode::InsufficientSupport, kModule, "no human-labeled jailbreaks to train on");
  }
  return train_one_vs_all(d, Featurizer(fit_tfidf(labeled, tfidf)), cfg);
}

Dataset label_unlabelled(const OneVsAllClassifier& c, const Dataset& d) {
  std::vector<PromptRecord> out;
  out.reserve(d.size());
  for (const auto& r : d) {
    PromptRecord copy = r;
    if (r.label == Label::Jailbreak && r.categories.empty()) {
      for (const auto& [tag, score] : c.scores(r)) {
        if (score >= c.threshold_for(tag)) copy.categories.insert(tag);
      }
      if (copy.categories.empty()) copy.categories.insert(CategoryTag::Unclassified);
      copy.machine_labeled = true;
    }
    out.push_back(std::move(copy));
  }
  return Dataset(std::move(out));
}

std::map<CategoryTag, double> per_label_accuracy(const OneVsAllClassifier& c, const Dataset& labeled) {
  std::map<CategoryTag, std::size_t> correct;
  for (const auto& r : labeled) {
    for (const auto& [tag, score] : c.scores(r)) {
      if ((score >= c.threshold_for(tag)) == r.has_category(tag)) ++correct[tag];
    }
  }
  std::map<CategoryTag, double> out;
  for (const auto& [tag, model] : c.models) {
    out[tag] = labeled.empty() ? 0.0 : static_cast<double>(correct[tag]) / static_cast<double>(labeled.size());
  }
  return out;
}

}  // namespace promptgate
