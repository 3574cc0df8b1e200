#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "promptgate/artifact.hpp"

namespace httplib {
class Server;
}

namespace promptgate::service {

inline constexpr std::size_t kMaxTextBytes = 1u << 20;

struct ScoreRequest {
  std::string text;
  std::optional<std::string> request_id;
};

struct CategoryScore {
  CategoryTag tag;
  double score = 0.0;
};

struct ScoreResponse {
  double probability = 0.0;
  bool is_jailbreak = false;
  /// Categories at or above their threshold; only filled with a one-vs-all model loaded.
  std::vector<CategoryScore> categories;
  /// Every modelled category's score; empty without a one-vs-all model.
  std::vector<CategoryScore> category_scores;
  bool has_category_model = false;
  std::string model_version;
  std::optional<std::string> request_id;
};

std::string to_json(const ScoreResponse& r);

/// Request-level failure mapped onto an HTTP status and a stable code.
struct RequestError {
  int status;
  std::string code;
  std::string message;
};

std::string error_body(const RequestError& e);

/// Parses a /v1/score body. Returns RequestError for malformed JSON, a
/// missing or empty text, or text over kMaxTextBytes.
std::variant<ScoreRequest, RequestError> parse_score_request(std::string_view body);

/// Immutable snapshot of everything needed to score.
struct LoadedModels {
  ModelArtifact model;
  std::optional<OneVsAllClassifier> categories;
  double threshold = 0.5;
};

/// Throws Error(ArtifactLoadFailure) when an artifact is unreadable or cannot
/// featurize raw text.
std::shared_ptr<const LoadedModels> load_models(const std::filesystem::path& model_path,
                                                const std::optional<std::filesystem::path>& ovr_path,
                                                double threshold);

/// Holds the current model snapshot. Readers copy the shared pointer and
/// score without holding the lock; reload swaps in a new snapshot, so
/// in-flight requests finish on the version they started with.
class ScoringEngine {
 public:
  explicit ScoringEngine(std::shared_ptr<const LoadedModels> models);

  std::shared_ptr<const LoadedModels> snapshot() const;
  ScoreResponse score_one(const ScoreRequest& request) const;

  /// Loads a new primary model (keeping the category model and threshold) and
  /// swaps it in. The old snapshot stays active if loading fails.
  void reload(const std::filesystem::path& model_path);

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const LoadedModels> current_;
};

ScoreResponse score_with(const LoadedModels& models, const ScoreRequest& request);

/// HTTP front end: POST /v1/score, GET /v1/health, POST /v1/reload.
class HttpService {
 public:
  explicit HttpService(std::shared_ptr<ScoringEngine> engine);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds host:port (port 0 picks a free port) and returns the bound port.
  /// Throws Error(BindFailure).
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  std::shared_ptr<ScoringEngine> engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace promptgate::service
