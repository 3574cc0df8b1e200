#include "promptgate/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <json.hpp>
#include <numeric>
#include <thread>

#include "promptgate/error.hpp"
#include "promptgate/rng.hpp"

namespace promptgate {

namespace {

constexpr std::string_view kModule = "eval";
using json = nlohmann::ordered_json;

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const MetricReport& m) {
  json j;
  j["auc"] = m.auc;
  j["accuracy"] = m.accuracy;
  j["fnr"] = optional_json(m.fnr);
  j["tpr"] = optional_json(m.tpr);
  j["counts"] = {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}};
  return j;
}

json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }

std::string fixed(double v, int precision = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, kModule,
                std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw Error(ErrorCode::EmptyCounts, kModule, "no scores to tally");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  return c;
}

Rates metrics_from_counts(const ConfusionCounts& c) {
  const auto n = c.total();
  if (n == 0) throw Error(ErrorCode::EmptyCounts, kModule, "confusion counts are all zero");
  Rates r;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  if (c.tp + c.fn > 0) {
    // 1 - tpr keeps fnr + tpr == 1 exact in binary floating point; it agrees
    // with fn / (tp + fn) to within one ulp.
    r.tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.fnr = 1.0 - *r.tpr;
  }
  return r;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, kModule,
                std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) + " labels");
  }
  const auto n = scores.size();
  std::uint64_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::SingleClassLabels, kModule, "AUC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // A tie group occupying 1-based ranks [i+1, j] has average rank (i+1+j)/2;
  // doubling keeps everything integral.
  std::uint64_t pos_rank_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t rank_x2 = i + 1 + j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) pos_rank_x2 += rank_x2;
    }
    i = j;
  }
  const std::uint64_t u_x2 = pos_rank_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * n_pos * n_neg);
}

MetricReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricReport m;
  m.counts = confusion(scores, labels, threshold);
  const auto rates = metrics_from_counts(m.counts);
  m.accuracy = rates.accuracy;
  m.fnr = rates.fnr;
  m.tpr = rates.tpr;
  m.auc = auc(scores, labels);
  return m;
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<int> binary_labels(const Dataset& d) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& r : d) y.push_back(r.label == Label::Jailbreak ? 1 : 0);
  return y;
}

std::vector<double> TrainedPipeline::score(const Dataset& d) const {
  std::vector<double> out;
  out.reserve(d.size());
  for (const auto& r : d) out.push_back(predict_proba(model, featurizer.featurize(r)));
  return out;
}

TrainedPipeline fit_pipeline(const Dataset& train, const PipelineConfig& cfg, std::uint64_t seed) {
  const Dataset* fit_on = &train;
  Dataset augmented;
  if (cfg.augment) {
    if (cfg.features == FeatureKind::Embeddings) {
      throw Error(ErrorCode::InvalidArgument, kModule, "augmentation cannot be combined with precomputed embeddings");
    }
    auto acfg = cfg.augment->config;
    acfg.seed = derive_seed(seed, acfg.seed);
    const Thesaurus empty;
    augmented = augment_dataset(train, acfg, *cfg.augment->translator,
                                cfg.augment->thesaurus ? *cfg.augment->thesaurus : empty);
    fit_on = &augmented;
  }
  std::optional<Featurizer> featurizer;
  if (cfg.features == FeatureKind::Tfidf) {
    featurizer.emplace(fit_tfidf(*fit_on, cfg.tfidf));
  } else {
    if (!cfg.embeddings) throw Error(ErrorCode::InvalidArgument, kModule, "embedding features need an embedding table");
    featurizer.emplace(cfg.embeddings);
  }
  auto model_cfg = cfg.model;
  model_cfg.seed = seed;
  const auto X = featurizer->featurize(*fit_on);
  const auto y = binary_labels(*fit_on);
  return TrainedPipeline{std::move(*featurizer), train_binary(X, y, model_cfg)};
}

void parallel_for(std::size_t n, std::size_t jobs, std::string_view what, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error(e.code(), e.module(), std::string(what) + " " + std::to_string(i) + ": " + e.message());
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(what) + " " + std::to_string(i) + ": " + e.what());
    }
  }
}

RepeatedRunReport run_repeated(const Dataset& d, const PipelineConfig& cfg, std::size_t n_runs,
                               std::uint64_t base_seed, double test_fraction, std::size_t jobs) {
  if (n_runs < 2) throw Error(ErrorCode::InvalidArgument, kModule, "run_repeated needs at least 2 runs");
  if (d.counts().jailbreak == 0 || d.counts().benign == 0) {
    throw Error(ErrorCode::SingleClassLabels, kModule, "dataset must contain both classes");
  }
  RepeatedRunReport report;
  report.n_runs = n_runs;
  report.runs.resize(n_runs);
  for (std::size_t i = 0; i < n_runs; ++i) report.seeds.push_back(base_seed + i);

  parallel_for(n_runs, jobs, "run", [&](std::size_t i) {
    const auto seed = report.seeds[i];
    const auto split = split_random(d, SplitSpec{seed, test_fraction});
    const auto trained = fit_pipeline(split.train, cfg, seed);
    report.runs[i] = evaluate_scores(trained.score(split.test), binary_labels(split.test), cfg.threshold);
  });

  std::vector<double> aucs, accs, fnrs, tprs;
  for (const auto& r : report.runs) {
    aucs.push_back(r.auc);
    accs.push_back(r.accuracy);
    if (r.fnr) fnrs.push_back(*r.fnr);
    if (r.tpr) tprs.push_back(*r.tpr);
  }
  report.auc = summarize(aucs);
  report.accuracy = summarize(accs);
  report.fnr = summarize(fnrs);
  report.tpr = summarize(tprs);
  return report;
}

NovelEvalReport run_novel(const Dataset& d, std::span<const CategoryTag> tags, const PipelineConfig& cfg,
                          std::uint64_t seed, std::size_t jobs) {
  NovelEvalReport report;
  report.entries.resize(tags.size());
  parallel_for(tags.size(), jobs, "held-out tag", [&](std::size_t i) {
    const auto tag = tags[i];
    const auto split = split_holdout_category(d, tag, seed);
    const auto trained = fit_pipeline(split.train, cfg, seed);
    auto& e = report.entries[i];
    e.tag = tag;
    e.metrics = evaluate_scores(trained.score(split.test), binary_labels(split.test), cfg.threshold);
    e.train_size = split.train.size();
    e.test_size = split.test.size();
    e.test_jailbreaks = split.test.counts().jailbreak;
    e.test_benign = split.test.counts().benign;
    e.train_records_with_tag = static_cast<std::size_t>(std::count_if(
        split.train.begin(), split.train.end(), [tag](const PromptRecord& r) { return r.has_category(tag); }));
  });
  return report;
}

std::string report_to_json(const RepeatedRunReport& r) {
  json j;
  j["n_runs"] = r.n_runs;
  j["seeds"] = r.seeds;
  j["summary"] = {{"auc", summary_json(r.auc)},
                  {"accuracy", summary_json(r.accuracy)},
                  {"fnr", summary_json(r.fnr)},
                  {"tpr", summary_json(r.tpr)}};
  auto runs = json::array();
  for (const auto& m : r.runs) runs.push_back(metrics_json(m));
  j["runs"] = std::move(runs);
  return j.dump(2) + "\n";
}

std::string report_to_json(const NovelEvalReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    json j;
    j["category"] = to_string(e.tag);
    j["metrics"] = metrics_json(e.metrics);
    j["train_size"] = e.train_size;
    j["test_size"] = e.test_size;
    j["test_jailbreaks"] = e.test_jailbreaks;
    j["test_benign"] = e.test_benign;
    j["train_records_with_tag"] = e.train_records_with_tag;
    entries.push_back(std::move(j));
  }
  json j;
  j["entries"] = std::move(entries);
  return j.dump(2) + "\n";
}

std::string format_table(const RepeatedRunReport& r, std::string_view row_label) {
  std::string out;
  out += pad("Features & Model", 28) + "AUC           Accuracy      FNR           TPR\n";
  out += pad("", 28) + "Mean   Std    Mean   Std    Mean   Std    Mean   Std\n";
  out += pad(std::string(row_label), 28);
  for (const auto* s : {&r.auc, &r.accuracy, &r.fnr, &r.tpr}) {
    out += fixed(s->mean) + "  " + fixed(s->std) + "  ";
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  out += "\n";
  return out;
}

std::string format_table(const NovelEvalReport& r) {
  std::string out = pad("Test Prompts", 24) + "AUC    Accuracy  FNR    TPR\n";
  for (const auto& e : r.entries) {
    out += pad(std::string(to_string(e.tag)), 24) + pad(fixed(e.metrics.auc, 2), 7) +
           pad(fixed(e.metrics.accuracy, 2), 10) + pad(e.metrics.fnr ? fixed(*e.metrics.fnr, 2) : "n/a", 7) +
           (e.metrics.tpr ? fixed(*e.metrics.tpr, 2) : "n/a") + "\n";
  }
  return out;
}

}  // namespace promptgate
