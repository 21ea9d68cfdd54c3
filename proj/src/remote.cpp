#include "groundplay/remote.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "groundplay/parse.hpp"

namespace groundplay {

namespace {

using nlohmann::json;

std::string corrective_note(const ParseError& error) {
  return "\n\nNOTE: your previous reply could not be used (" + std::string(error.what()) +
         "). Reply with a line of the form 'ACTION : **VERB** : <text>' using one of the "
         "allowed actions.";
}

}  // namespace

void RemoteEndpointConfig::validate() const {
  if (base_url.find("://") == std::string::npos) {
    throw ConfigError("endpoint base_url must include a scheme: '" + base_url + "'");
  }
  if (model_name.empty()) throw ConfigError("endpoint model_name is empty");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("endpoint temperature must be >= 0");
  }
  if (max_output_tokens < 1) throw ConfigError("endpoint max_output_tokens must be >= 1");
  if (timeout_ms < 1) throw ConfigError("endpoint timeout_ms must be >= 1");
  if (max_retries < 0) throw ConfigError("endpoint max_retries must be >= 0");
  if (max_in_flight < 1) throw ConfigError("endpoint max_in_flight must be >= 1");
  if (backoff_base_ms < 0 || backoff_max_ms < backoff_base_ms) {
    throw ConfigError("endpoint backoff must satisfy 0 <= backoff_base_ms <= backoff_max_ms");
  }
}

std::chrono::milliseconds backoff_delay(const RemoteEndpointConfig& config, int retry) {
  long long delay = config.backoff_base_ms;
  for (int i = 1; i < retry && delay < config.backoff_max_ms; ++i) delay *= 2;
  return std::chrono::milliseconds(std::min<long long>(delay, config.backoff_max_ms));
}

RemoteChatClient::RemoteChatClient(RemoteEndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme_end = config_.base_url.find("://");
  const auto path_start = config_.base_url.find('/', scheme_end + 3);
  origin_ = config_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) path_prefix_ = config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin_.rfind("https://", 0) == 0) {
    throw ConfigError("https endpoint '" + config_.base_url + "' requires a build with OpenSSL");
  }
#endif
  if (!config_.api_key_env.empty()) {
    const char* key = std::getenv(config_.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError("environment variable " + config_.api_key_env + " is not set");
    }
    api_key_ = key;
  }
}

ChatOutcome RemoteChatClient::complete(const std::string& user_message) const {
  {
    std::unique_lock lock(mutex_);
    slot_free_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    const RemoteChatClient* self;
    ~Release() {
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->slot_free_.notify_one();
    }
  } release{this};

  const json body = {
      {"model", config_.model_name},
      {"messages", json::array({{{"role", "user"}, {"content", user_message}}})},
      {"temperature", config_.temperature},
      {"max_tokens", config_.max_output_tokens},
  };

  httplib::Client http(origin_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  http.set_connection_timeout(timeout);
  http.set_read_timeout(timeout);
  http.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = http.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                       "application/json");
  if (!res) {
    return {ChatOutcome::Kind::Transient, "request failed: " + httplib::to_string(res.error()), 0};
  }
  const int status = res->status;
  if (status >= 500) {
    return {ChatOutcome::Kind::Transient, "HTTP " + std::to_string(status), status};
  }
  if (status >= 400) {
    return {ChatOutcome::Kind::Fatal, "HTTP " + std::to_string(status) + ": " + res->body, status};
  }
  try {
    const auto reply = json::parse(res->body);
    const auto& content = reply.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw std::runtime_error("content is not a string");
    return {ChatOutcome::Kind::Ok, content.get<std::string>(), status};
  } catch (const std::exception& e) {
    return {ChatOutcome::Kind::Transient, std::string("malformed response body: ") + e.what(),
            status};
  }
}

RemoteBackend::RemoteBackend(std::string endpoint_name, RemoteEndpointConfig config)
    : endpoint_name_(std::move(endpoint_name)), client_(std::move(config)) {}

AgentAction RemoteBackend::act(const ConversationState& state, Role role,
                               const PromptBundle& prompt) const {
  if (role == Role::User && state.phase == Phase::AwaitUserQuery) {
    return {std::nullopt, Action::Query, state.query->query_text, 1};
  }
  const ActionSet allowed = allowed_actions(state);
  const int budget = client_.config().max_retries + 1;
  std::string note;
  std::string last_error = "no attempt made";
  bool transient_before = false;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    if (transient_before) std::this_thread::sleep_for(backoff_delay(client_.config(), attempt - 1));
    const auto outcome = client_.complete(prompt.rendered + note);
    transient_before = outcome.kind == ChatOutcome::Kind::Transient;
    switch (outcome.kind) {
      case ChatOutcome::Kind::Fatal:
        throw BackendError(descriptor() + ": " + outcome.content);
      case ChatOutcome::Kind::Transient:
        last_error = outcome.content;
        continue;
      case ChatOutcome::Kind::Ok:
        break;
    }
    try {
      auto reply = parse_agent_output(outcome.content, role, allowed);
      return {std::move(reply.thought), reply.action, std::move(reply.observation), attempt};
    } catch (const ParseError& e) {
      last_error = e.what();
      note = corrective_note(e);
    }
  }
  throw RecoverableFailure(descriptor() + ": gave up after " + std::to_string(budget) +
                               " attempts: " + last_error,
                           budget);
}

}  // namespace groundplay
