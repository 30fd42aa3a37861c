#ifndef VFKIT_TCG_LLM_HPP
#define VFKIT_TCG_LLM_HPP

#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vfkit/error.hpp"
#include "vfkit/util/fs.hpp"
#include "vfkit/util/hash.hpp"

namespace vfkit::tcg {

struct LlmRequest {
  std::string model_tag;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 4096;
  bool operator==(const LlmRequest&) const = default;
};

struct LlmUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool operator==(const LlmUsage&) const = default;
};

struct LlmResponse {
  std::string text;
  std::string finish_reason;
  LlmUsage usage;
  bool operator==(const LlmResponse&) const = default;
};

inline nlohmann::json to_json(const LlmRequest& r) {
  return {{"model", r.model_tag}, {"prompt", r.prompt}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
}

inline nlohmann::json to_json(const LlmResponse& r) {
  return {{"text", r.text},
          {"finish_reason", r.finish_reason},
          {"usage", {{"prompt_tokens", r.usage.prompt_tokens}, {"completion_tokens", r.usage.completion_tokens}}}};
}

inline LlmResponse response_from_json(const nlohmann::json& j) {
  LlmResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = j.value("finish_reason", std::string{});
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
    r.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
  }
  return r;
}

/// Replay key: sha256 of the request's canonical JSON (keys sorted, compact).
inline std::string request_hash(const LlmRequest& r) { return util::sha256_hex(to_json(r).dump()); }

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual LlmResponse complete(const LlmRequest& request) = 0;
};

inline LlmResponse llm_call(const LlmRequest& request, LlmClient& client) { return client.complete(request); }

/// Directory of `<request hash>.json` records holding `{"request": ..., "response": ...}`.
class ReplayStore {
 public:
  explicit ReplayStore(fs::path dir) : dir_(std::move(dir)) {}

  [[nodiscard]] const fs::path& dir() const noexcept { return dir_; }
  [[nodiscard]] fs::path path_for(const LlmRequest& r) const { return dir_ / (request_hash(r) + ".json"); }

  [[nodiscard]] std::optional<LlmResponse> find(const LlmRequest& r) const {
    const auto p = path_for(r);
    if (!fs::exists(p)) return std::nullopt;
    try {
      return response_from_json(nlohmann::json::parse(util::read_file(p)).at("response"));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(p.string(), 1, e.what());
    }
  }

  void put(const LlmRequest& r, const LlmResponse& resp) const {
    fs::create_directories(dir_);
    const nlohmann::json record = {{"request", to_json(r)}, {"response", to_json(resp)}};
    util::write_file_atomic(path_for(r), record.dump(2) + "\n");
  }

 private:
  fs::path dir_;
};

/// Serves responses from a replay store; a miss is an error, never a live call.
class ReplayClient : public LlmClient {
 public:
  explicit ReplayClient(fs::path dir) : store_(std::move(dir)) {}

  LlmResponse complete(const LlmRequest& request) override {
    if (auto r = store_.find(request)) return *r;
    throw ReplayMissError(request_hash(request));
  }

 private:
  ReplayStore store_;
};

struct HttpReply {
  int status = 0;  ///< 0 when the transport failed before a status arrived
  std::string body;
  std::string error;
};

/// POSTs a JSON body with a bearer token and returns the reply.
using HttpTransport = std::function<HttpReply(const std::string& body)>;

inline HttpTransport httplib_transport(const std::string& endpoint, const std::string& api_key,
                                       std::chrono::seconds timeout = std::chrono::seconds(300)) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("LLM endpoint must be an absolute URL: " + endpoint);
  const auto path_start = endpoint.find('/', scheme_end + 3);
  const std::string host = endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
  return [host, path, api_key, timeout](const std::string& body) {
    httplib::Client cli(host);
    cli.set_connection_timeout(std::chrono::seconds(30));
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(std::chrono::seconds(60));
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) return HttpReply{0, "", httplib::to_string(res.error())};
    return HttpReply{res->status, res->body, ""};
  };
}

struct LiveOptions {
  std::string endpoint = "https://api.deepseek.com/v1/chat/completions";
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{1000};
  /// Every successful exchange is written here when set.
  std::optional<fs::path> record_dir;
};

struct AttemptLog {
  std::string request_hash;
  int attempt = 0;
  int status = 0;
  std::string error;
};

/// Chat-completion client. Transport failures, 429 and 5xx are retried with
/// exponential backoff up to `max_attempts`; other statuses fail immediately.
class LiveClient : public LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  LiveClient(LiveOptions opts, HttpTransport transport,
             Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : opts_(std::move(opts)), transport_(std::move(transport)), sleep_(std::move(sleeper)) {
    if (opts_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  }

  /// Client over HTTP with the key read from VF_LLM_KEY.
  static std::unique_ptr<LiveClient> from_environment(LiveOptions opts) {
    const char* key = std::getenv("VF_LLM_KEY");
    if (key == nullptr || *key == '\0') throw ConfigError("VF_LLM_KEY is not set; live LLM mode needs an API key");
    auto transport = httplib_transport(opts.endpoint, key);
    return std::make_unique<LiveClient>(std::move(opts), std::move(transport));
  }

  LlmResponse complete(const LlmRequest& request) override {
    const nlohmann::json body = {{"model", request.model_tag},
                                 {"messages", {{{"role", "user"}, {"content", request.prompt}}}},
                                 {"temperature", request.temperature},
                                 {"max_tokens", request.max_tokens}};
    const std::string hash = request_hash(request);
    std::chrono::milliseconds backoff = opts_.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
      const HttpReply reply = transport_(body.dump());
      log({hash, attempt, reply.status, reply.error});
      if (reply.status == 200) {
        auto resp = parse_reply(reply.body);
        if (opts_.record_dir) ReplayStore(*opts_.record_dir).put(request, resp);
        return resp;
      }
      last_error = reply.status == 0 ? reply.error : "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200);
      const bool retryable = reply.status == 0 || reply.status == 429 || reply.status >= 500;
      if (!retryable) throw InfraError("LLM request " + hash + " failed: " + last_error);
      if (attempt < opts_.max_attempts) {
        sleep_(backoff);
        backoff *= 2;
      }
    }
    throw InfraError("LLM request " + hash + " failed after " + std::to_string(opts_.max_attempts) +
                     " attempts: " + last_error);
  }

  [[nodiscard]] std::vector<AttemptLog> attempts() const {
    std::lock_guard lock(mu_);
    return attempts_;
  }

 private:
  static LlmResponse parse_reply(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      const auto& choice = j.at("choices").at(0);
      LlmResponse r;
      r.text = choice.at("message").at("content").get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        r.finish_reason = choice["finish_reason"].get<std::string>();
      if (j.contains("usage")) {
        r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
        r.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
      }
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw InfraError(std::string("malformed chat-completion reply: ") + e.what());
    }
  }

  void log(AttemptLog entry) {
    std::lock_guard lock(mu_);
    attempts_.push_back(std::move(entry));
  }

  LiveOptions opts_;
  HttpTransport transport_;
  Sleeper sleep_;
  mutable std::mutex mu_;
  std::vector<AttemptLog> attempts_;
};

}  // namespace vfkit::tcg

#endif  // VFKIT_TCG_LLM_HPP
