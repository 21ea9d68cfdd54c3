#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "groundplay/remote.hpp"
#include "support.hpp"

using namespace groundplay;
using namespace std::chrono_literals;

namespace {

// Local chat endpoint whose reply is decided per request by a callback
// taking the 1-based request number and the request body.
class FakeEndpoint {
public:
  using Handler = std::function<void(int, const nlohmann::json&, httplib::Response&)>;

  explicit FakeEndpoint(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++requests_;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      const int now = ++active_;
      int seen = max_active_.load();
      while (now > seen && !max_active_.compare_exchange_weak(seen, now)) {
      }
      handler_(n, nlohmann::json::parse(req.body), res);
      --active_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  RemoteEndpointConfig config() const {
    RemoteEndpointConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model_name = "fake-model";
    c.timeout_ms = 300;
    c.max_retries = 3;
    c.backoff_base_ms = 1;
    c.backoff_max_ms = 4;
    return c;
  }

  int requests() const { return requests_; }
  int max_active() const { return max_active_; }
  std::vector<std::string> bodies() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return bodies_;
  }
  std::vector<std::string> auth() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return auth_;
  }

private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> active_{0};
  std::atomic<int> max_active_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_;
};

void reply(httplib::Response& res, const std::string& content) {
  nlohmann::json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  res.set_content(body.dump(), "application/json");
}

ConversationState assistant_turn() {
  auto q = std::make_shared<const QueryExample>(
      testing::make_example("r", "when was it released?", {{"when was the book released?", "1997"},
                                                           {"when was the movie released?", "2001"}}));
  auto s = start_conversation(q, 0, {2, 0.7}, 1);
  return advance(s, Role::User, Action::Query, q->query_text);
}

const PromptBundle kPrompt{"assistant_plain", "PROMPT TEXT", {}};

}  // namespace

TEST_CASE("successful reply is parsed and the wire format is as documented") {
  FakeEndpoint server([](int, const nlohmann::json& body, httplib::Response& res) {
    CHECK(body.at("model") == "fake-model");
    CHECK(body.at("messages").size() == 1);
    CHECK(body.at("messages")[0].at("role") == "user");
    CHECK(body.at("messages")[0].at("content") == "PROMPT TEXT");
    CHECK(body.at("temperature") == 1.0);
    CHECK(body.at("max_tokens") == 512);
    reply(res, "ACTION : **CLARIFY** : which year?");
  });
  RemoteBackend backend("local", server.config());
  const auto a = backend.act(assistant_turn(), Role::Assistant, kPrompt);
  CHECK(a.action == Action::Clarify);
  CHECK(a.observation == "which year?");
  CHECK_FALSE(a.thought.has_value());
  CHECK(a.attempts == 1);
  CHECK(backend.descriptor() == "remote:local");
  CHECK(server.auth().front().empty());
}

TEST_CASE("two timeouts then success records three attempts") {
  FakeEndpoint server([](int n, const nlohmann::json&, httplib::Response& res) {
    if (n <= 2) std::this_thread::sleep_for(700ms);
    reply(res, "ACTION : **ANSWER** : 1997");
  });
  RemoteBackend backend("local", server.config());
  const auto a = backend.act(assistant_turn(), Role::Assistant, kPrompt);
  CHECK(a.action == Action::Answer);
  CHECK(a.attempts == 3);
}

TEST_CASE("server errors are retried") {
  FakeEndpoint server([](int n, const nlohmann::json&, httplib::Response& res) {
    if (n == 1) {
      res.status = 503;
      return;
    }
    if (n == 2) {
      res.set_content("not json", "text/plain");
      return;
    }
    reply(res, "ACTION : **MULTI_ANSWER** : book: 1997; movie: 2001");
  });
  RemoteBackend backend("local", server.config());
  const auto a = backend.act(assistant_turn(), Role::Assistant, kPrompt);
  CHECK(a.action == Action::MultiAns);
  CHECK(a.attempts == 3);
}

TEST_CASE("malformed replies exhaust the budget") {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) {
    reply(res, "I think it was 1997");
  });
  RemoteBackend backend("local", server.config());
  try {
    backend.act(assistant_turn(), Role::Assistant, kPrompt);
    FAIL("expected RecoverableFailure");
  } catch (const RecoverableFailure& e) {
    CHECK(e.attempts() == 4);
  }
  CHECK(server.requests() == 4);
  const auto bodies = server.bodies();
  CHECK(bodies.front().find("NOTE") == std::string::npos);
  CHECK(bodies.back().find("NOTE: your previous reply could not be used") != std::string::npos);
}

TEST_CASE("disallowed action counts as a parse failure") {
  FakeEndpoint server([](int n, const nlohmann::json&, httplib::Response& res) {
    reply(res, n == 1 ? "ACTION : **ANSWER_CLARIFICATION** : x" : "ACTION : **ANSWER** : 1997");
  });
  RemoteBackend backend("local", server.config());
  const auto a = backend.act(assistant_turn(), Role::Assistant, kPrompt);
  CHECK(a.attempts == 2);
}

TEST_CASE("client errors fail fast") {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) {
    res.status = 401;
    res.set_content("bad key", "text/plain");
  });
  RemoteBackend backend("local", server.config());
  CHECK_THROWS_AS(backend.act(assistant_turn(), Role::Assistant, kPrompt), BackendError);
  CHECK(server.requests() == 1);
}

TEST_CASE("dead endpoint gives a recoverable failure") {
  RemoteEndpointConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model_name = "m";
  c.timeout_ms = 200;
  c.max_retries = 1;
  c.backoff_base_ms = 1;
  RemoteBackend backend("dead", c);
  CHECK_THROWS_AS(backend.act(assistant_turn(), Role::Assistant, kPrompt), RecoverableFailure);
}

TEST_CASE("user query is answered locally") {
  RemoteEndpointConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.model_name = "m";
  RemoteBackend backend("dead", c);
  auto q = std::make_shared<const QueryExample>(testing::make_example("u", "q?", {{"q?", "a"}}));
  const auto a = backend.act(start_conversation(q, 0, {}, 1), Role::User, kPrompt);
  CHECK(a.action == Action::Query);
  CHECK(a.observation == "q?");
}

TEST_CASE("api key header and missing key") {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) {
    reply(res, "ACTION : **ANSWER** : 1997");
  });
  auto c = server.config();
  c.api_key_env = "GROUNDPLAY_TEST_KEY";
  ::setenv("GROUNDPLAY_TEST_KEY", "sekret", 1);
  RemoteBackend backend("local", c);
  backend.act(assistant_turn(), Role::Assistant, kPrompt);
  CHECK(server.auth().back() == "Bearer sekret");
  ::unsetenv("GROUNDPLAY_TEST_KEY");
  CHECK_THROWS_AS(RemoteBackend("local", c), ConfigError);
}

TEST_CASE("in-flight requests are bounded") {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) {
    std::this_thread::sleep_for(40ms);
    reply(res, "ACTION : **ANSWER** : 1997");
  });
  auto c = server.config();
  c.max_in_flight = 2;
  c.timeout_ms = 5000;
  RemoteBackend backend("local", c);
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&] { backend.act(assistant_turn(), Role::Assistant, kPrompt); });
  }
  for (auto& t : threads) t.join();
  CHECK(server.requests() == 6);
  CHECK(server.max_active() <= 2);
}

TEST_CASE("config validation and backoff") {
  RemoteEndpointConfig c;
  c.base_url = "http://x";
  c.model_name = "m";
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.max_in_flight = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.base_url = "localhost:8000";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.temperature = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  c.backoff_base_ms = 500;
  c.backoff_max_ms = 8000;
  CHECK(backoff_delay(c, 1) == 500ms);
  CHECK(backoff_delay(c, 2) == 1000ms);
  CHECK(backoff_delay(c, 4) == 4000ms);
  CHECK(backoff_delay(c, 5) == 8000ms);
  CHECK(backoff_delay(c, 30) == 8000ms);
}
