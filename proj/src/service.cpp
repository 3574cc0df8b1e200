#include "promptgate/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "promptgate/error.hpp"

namespace promptgate::service {

namespace {

using json = nlohmann::ordered_json;

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, const RequestError& e) { send_json(res, e.status, error_body(e)); }

json category_list(const std::vector<CategoryScore>& scores) {
  auto arr = json::array();
  for (const auto& c : scores) arr.push_back({{"category", to_string(c.tag)}, {"score", c.score}});
  return arr;
}

}  // namespace

std::string to_json(const ScoreResponse& r) {
  json j;
  j["probability"] = r.probability;
  j["is_jailbreak"] = r.is_jailbreak;
  if (r.has_category_model) {
    j["categories"] = category_list(r.categories);
    j["category_scores"] = category_list(r.category_scores);
  }
  j["model_version"] = r.model_version;
  j["request_id"] = r.request_id ? json(*r.request_id) : json(nullptr);
  return j.dump();
}

std::string error_body(const RequestError& e) {
  json j;
  j["error"] = {{"code", e.code}, {"message", e.message}};
  return j.dump();
}

std::variant<ScoreRequest, RequestError> parse_score_request(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    return RequestError{400, "invalid_json", e.what()};
  }
  if (!j.is_object()) return RequestError{400, "invalid_json", "request body must be a JSON object"};
  ScoreRequest req;
  if (auto it = j.find("request_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) return RequestError{400, "invalid_request_id", "request_id must be a string"};
    req.request_id = it->get<std::string>();
  }
  auto it = j.find("text");
  if (it == j.end() || !it->is_string()) return RequestError{400, "missing_text", "field 'text' (string) is required"};
  req.text = it->get<std::string>();
  if (req.text.size() > kMaxTextBytes) {
    return RequestError{413, "oversize_text",
                        "text is " + std::to_string(req.text.size()) + " bytes; limit is " +
                            std::to_string(kMaxTextBytes)};
  }
  if (req.text.empty()) return RequestError{400, "empty_text", "text must be non-empty"};
  return req;
}

std::shared_ptr<const LoadedModels> load_models(const std::filesystem::path& model_path,
                                                const std::optional<std::filesystem::path>& ovr_path,
                                                double threshold) {
  try {
    auto loaded = std::make_shared<LoadedModels>(LoadedModels{load_model(model_path), std::nullopt, threshold});
    if (!loaded->model.featurizer || !loaded->model.featurizer->tfidf()) {
      throw Error(ErrorCode::ArtifactLoadFailure, "service",
                  model_path.string() + " uses precomputed embeddings and cannot score raw text");
    }
    if (ovr_path) loaded->categories = load_one_vs_all(*ovr_path);
    return loaded;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ArtifactLoadFailure) throw;
    throw Error(ErrorCode::ArtifactLoadFailure, "service", e.what());
  }
}

ScoreResponse score_with(const LoadedModels& models, const ScoreRequest& request) {
  ScoreResponse r;
  r.probability = models.model.score_text(request.text);
  r.is_jailbreak = r.probability >= models.threshold;
  r.model_version = models.model.version;
  r.request_id = request.request_id;
  if (models.categories) {
    r.has_category_model = true;
    const auto& c = *models.categories;
    const auto* tfidf = c.featurizer.tfidf();
    for (const auto& [tag, score] : c.scores(tfidf->transform(request.text))) {
      r.category_scores.push_back({tag, score});
      if (score >= c.threshold_for(tag)) r.categories.push_back({tag, score});
    }
  }
  return r;
}

ScoringEngine::ScoringEngine(std::shared_ptr<const LoadedModels> models) : current_(std::move(models)) {}

std::shared_ptr<const LoadedModels> ScoringEngine::snapshot() const {
  std::lock_guard lock(mu_);
  return current_;
}

ScoreResponse ScoringEngine::score_one(const ScoreRequest& request) const { return score_with(*snapshot(), request); }

void ScoringEngine::reload(const std::filesystem::path& model_path) {
  const auto old = snapshot();
  auto fresh = load_models(model_path, std::nullopt, old->threshold);
  auto merged = std::make_shared<LoadedModels>(*fresh);
  merged->categories = old->categories;
  std::lock_guard lock(mu_);
  current_ = std::move(merged);
}

HttpService::HttpService(std::shared_ptr<ScoringEngine> engine)
    : engine_(std::move(engine)), server_(std::make_unique<httplib::Server>()) {
  // Leave headroom above the text limit so oversize prompts get a JSON 413.
  server_->set_payload_max_length(4 * kMaxTextBytes);

  server_->Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
    json j;
    j["status"] = "ok";
    j["model_version"] = engine_->snapshot()->model.version;
    send_json(res, 200, j.dump());
  });

  server_->Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
    auto parsed = parse_score_request(req.body);
    if (auto* err = std::get_if<RequestError>(&parsed)) {
      send_error(res, *err);
      return;
    }
    try {
      send_json(res, 200, to_json(engine_->score_one(std::get<ScoreRequest>(parsed))));
    } catch (const std::exception& e) {
      spdlog::error("scoring failed: {}", e.what());
      send_error(res, {500, "internal", e.what()});
    }
  });

  server_->Post("/v1/reload", [this](const httplib::Request& req, httplib::Response& res) {
    json j;
    try {
      j = json::parse(req.body);
    } catch (const json::parse_error& e) {
      send_error(res, {400, "invalid_json", e.what()});
      return;
    }
    if (!j.is_object() || !j.contains("model_path") || !j["model_path"].is_string()) {
      send_error(res, {400, "missing_model_path", "field 'model_path' (string) is required"});
      return;
    }
    try {
      engine_->reload(j["model_path"].get<std::string>());
    } catch (const std::exception& e) {
      spdlog::warn("reload failed: {}", e.what());
      send_error(res, {500, "reload_failed", e.what()});
      return;
    }
    const auto version = engine_->snapshot()->model.version;
    spdlog::info("reloaded model {}", version);
    send_json(res, 200, json{{"status", "ok"}, {"model_version", version}}.dump());
  });

  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 404 ? "not_found"
                             : res.status == 413 ? "payload_too_large"
                                                 : "http_" + std::to_string(res.status);
    res.set_content(error_body({res.status, code, "request failed"}), "application/json");
  });
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::BindFailure, "service", "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_) server_->stop();
}

bool HttpService::running() const { return server_ && server_->is_running(); }

}  // namespace promptgate::service
