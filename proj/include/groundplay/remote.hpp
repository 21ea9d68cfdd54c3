#pragma once

// Chat-completion backend for self-play with hosted models.
//
// Each act sends one self-contained user message. Timeouts, connection
// errors, HTTP 5xx and unusable response bodies are retried with bounded
// exponential backoff; HTTP 4xx fails fast. Unparseable replies are retried
// with a corrective note appended to the message. Transport and parse
// failures draw from one budget of max_retries + 1 attempts.

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <string>

#include "groundplay/agents.hpp"

namespace groundplay {

struct RemoteEndpointConfig {
  std::string base_url;
  std::string model_name;
  double temperature = 1.0;
  int max_output_tokens = 512;
  int timeout_ms = 60000;
  int max_retries = 3;
  int max_in_flight = 4;
  std::string api_key_env;  // empty: no Authorization header
  int backoff_base_ms = 500;
  int backoff_max_ms = 8000;

  // Throws ConfigError.
  void validate() const;
};

// Delay before retry number n (1-based): min(base * 2^(n-1), max).
std::chrono::milliseconds backoff_delay(const RemoteEndpointConfig& config, int retry);

struct ChatOutcome {
  enum class Kind { Ok, Transient, Fatal };
  Kind kind = Kind::Ok;
  std::string content;  // reply text when Ok, error description otherwise
  int status = 0;       // HTTP status, 0 when no response was received
};

class RemoteChatClient {
public:
  // Throws ConfigError for an invalid config or a missing API key variable.
  explicit RemoteChatClient(RemoteEndpointConfig config);

  const RemoteEndpointConfig& config() const { return config_; }

  // One HTTP exchange, no retries. Blocks while max_in_flight requests are
  // outstanding. Thread-safe.
  ChatOutcome complete(const std::string& user_message) const;

private:
  RemoteEndpointConfig config_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // path part of base_url without trailing '/'
  std::string api_key_;
  mutable std::mutex mutex_;
  mutable std::condition_variable slot_free_;
  mutable int in_flight_ = 0;
};

class RemoteBackend final : public AgentBackend {
public:
  RemoteBackend(std::string endpoint_name, RemoteEndpointConfig config);

  // The user's QUERY is q verbatim and is produced locally; every other act
  // goes over the wire. Throws RecoverableFailure when the attempt budget is
  // spent and BackendError on a fatal response.
  AgentAction act(const ConversationState& state, Role role,
                  const PromptBundle& prompt) const override;
  std::string descriptor() const override { return "remote:" + endpoint_name_; }

  const RemoteChatClient& client() const { return client_; }

private:
  std::string endpoint_name_;
  RemoteChatClient client_;
};

}  // namespace groundplay
