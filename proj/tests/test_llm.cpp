#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "scenaug/errors.hpp"
#include "scenaug/llm.hpp"
#include "support.hpp"

using namespace scenaug;
using nlohmann::json;

namespace {

std::vector<ChatMessage> user(const std::string& text) { return {{Role::User, text, std::nullopt}}; }

json completion(const std::string& text) {
  return {{"id", "stub"}, {"choices", json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}})}};
}

/// Local chat-completions stub. `plan` holds the status code for each successive request.
class Stub {
 public:
  explicit Stub(std::vector<int> plan, std::string reply = "stub completion")
      : plan_(std::move(plan)), reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const size_t n = hits_++;
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      const int status = n < plan_.size() ? plan_[n] : 200;
      res.status = status;
      if (status == 200) {
        res.set_content(completion(reply_).dump(), "application/json");
      } else {
        res.set_content(R"({"error": "stub"})", "application/json");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Stub() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  size_t hits() const { return hits_; }
  json body(size_t i) const {
    std::lock_guard lock(mutex_);
    return json::parse(bodies_.at(i));
  }
  std::string auth(size_t i) const {
    std::lock_guard lock(mutex_);
    return auth_.at(i);
  }

 private:
  httplib::Server server_;
  std::vector<int> plan_;
  std::string reply_;
  std::atomic<size_t> hits_{0};
  mutable std::mutex mutex_;
  std::vector<std::string> bodies_;
  std::vector<std::string> auth_;
  int port_ = 0;
  std::thread thread_;
};

BackendConfig stub_config(const Stub& s) {
  BackendConfig c;
  c.base_url = s.url();
  c.model_name = "stub-model";
  c.api_key_env_var = "SCENAUG_TEST_KEY";
  c.timeout_s = 5.0;
  c.max_retries = 2;
  c.backoff_base_s = 0.01;
  return c;
}

}  // namespace

TEST_CASE("scripted backend replays in order and then runs out") {
  ScriptedBackend b({{"OK", std::nullopt}});
  CHECK(b.chat(user("hello")) == "OK");
  CHECK_THROWS_AS(b.chat(user("hello")), ScriptExhausted);
  const auto log = b.call_log();
  REQUIRE(log.size() == 2);
  CHECK(log[0].ok());
  CHECK(log[0].response == "OK");
  CHECK_FALSE(log[1].ok());
  CHECK(b.consumed() == 1);
}

TEST_CASE("scripted predicate guards against drift") {
  ScriptedBackend b({{"answer", std::string("User Instructions")}});
  CHECK_THROWS_AS(b.chat(user("no instructions here")), PredicateMismatch);
  CHECK(b.call_log().size() == 1);
  CHECK(b.consumed() == 0);
  CHECK(b.chat(user("...\nUser Instructions:\nadd a car")) == "answer");
}

TEST_CASE("scripted backend is deterministic") {
  auto run = [] {
    ScriptedBackend b({{"a", std::nullopt}, {"b", std::nullopt}});
    std::vector<std::string> out{b.chat(user("x")), b.chat(user("y"))};
    for (const auto& e : b.call_log()) out.push_back(e.request.front().content + "->" + e.response);
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("scripted backend loads numbered files") {
  const auto dir = test::temp_dir("llm_scripts");
  std::ofstream(dir / "002_second.txt") << "second";
  std::ofstream(dir / "001_first.txt") << ">>> expect: Input:\nfirst\nline two";
  std::ofstream(dir / "010.txt") << "tenth";
  std::ofstream(dir / "notes.md") << "ignored";
  const auto b = ScriptedBackend::from_directory(dir);
  REQUIRE(b->size() == 3);
  CHECK_THROWS_AS(b->chat(user("nothing")), PredicateMismatch);
  CHECK(b->chat(user("Input:\n...")) == "first\nline two");
  CHECK(b->chat(user("x")) == "second");
  CHECK(b->chat(user("x")) == "tenth");
  CHECK_THROWS_AS(ScriptedBackend::from_directory(dir / "missing"), std::filesystem::filesystem_error);
}

TEST_CASE("message validation") {
  ScriptedBackend b({{"x", std::nullopt}});
  CHECK_THROWS_AS(b.chat({}), ValidationError);
  std::vector<ChatMessage> bad{{Role::Assistant, "hi", std::nullopt}};
  CHECK_THROWS_AS(b.chat(bad), ValidationError);
  std::vector<ChatMessage> img{{Role::System, "sys", Image{{1, 2, 3}, "image/png"}}};
  CHECK_THROWS_AS(b.chat(img), ValidationError);
  std::vector<ChatMessage> empty{{Role::User, "", std::nullopt}};
  CHECK_THROWS_AS(b.chat(empty), ValidationError);
  CHECK(b.call_log().size() == 4);
}

TEST_CASE("base64 matches the standard test vectors") {
  auto enc = [](std::string_view s) {
    return base64_encode(std::vector<std::uint8_t>(s.begin(), s.end()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg==");
  CHECK(enc("fooba") == "Zm9vYmE=");
  CHECK(enc("foobar") == "Zm9vYmFy");
}

TEST_CASE("backend config") {
  BackendConfig c;
  c.model_name = "m";
  CHECK_NOTHROW(c.validate());
  c.timeout_s = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.timeout_s = 1;
  c.max_retries = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  const auto j = BackendConfig::from_json({{"base_url", "http://x/v1"}, {"model_name", "gpt"}, {"max_retries", 5}});
  CHECK(j.base_url == "http://x/v1");
  CHECK(j.model_name == "gpt");
  CHECK(j.max_retries == 5);
  CHECK(j.temperature == 0.0);
}

TEST_CASE("request body carries model, messages and images") {
  BackendConfig c;
  c.model_name = "vlm";
  const HttpBackend b(c);
  std::vector<ChatMessage> msgs{{Role::System, "sys", std::nullopt}, {Role::User, "look", Image{{'f', 'o', 'o'}, "image/png"}}};
  const json body = b.request_body(msgs);
  CHECK(body["model"] == "vlm");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"][0]["content"] == "sys");
  CHECK(body["messages"][1]["content"][1]["image_url"]["url"] == "data:image/png;base64,Zm9v");
  CHECK_FALSE(body.contains("tools"));
}

TEST_CASE("native tool calls become inline CALL lines") {
  const json body = {{"choices",
                      json::array({{{"message",
                                     {{"role", "assistant"},
                                      {"content", nullptr},
                                      {"tool_calls",
                                       json::array({{{"type", "function"},
                                                     {"function",
                                                      {{"name", "lane_point"},
                                                       {"arguments", R"({"lane_id": "Lane1", "distance_m": 21.4})"}}}}})}}}}})}};
  CHECK(HttpBackend::extract_reply(body) == "CALL lane_point(\"Lane1\", 21.4)\n");
  CHECK_THROWS_AS(HttpBackend::extract_reply(json{{"choices", json::array()}}), BackendError);
}

TEST_CASE("HTTP backend against a local stub") {
  ::setenv("SCENAUG_TEST_KEY", "secret-token", 1);

  SUBCASE("plain completion") {
    Stub stub({200}, "Modified Vectors:\n{}");
    HttpBackend b(stub_config(stub));
    CHECK(b.chat(user("hello")) == "Modified Vectors:\n{}");
    CHECK(stub.hits() == 1);
    CHECK(stub.auth(0) == "Bearer secret-token");
    CHECK(stub.body(0)["model"] == "stub-model");
    CHECK(stub.body(0)["messages"][0]["content"] == "hello");
    REQUIRE(b.call_log().size() == 1);
    CHECK(b.call_log()[0].attempts == 1);
  }

  SUBCASE("transient errors are retried") {
    Stub stub({503, 429, 200});
    HttpBackend b(stub_config(stub));
    CHECK(b.chat(user("hello")) == "stub completion");
    CHECK(stub.hits() == 3);
    CHECK(b.call_log().at(0).attempts == 3);
  }

  SUBCASE("retries never exceed the limit") {
    Stub stub({500, 500, 500, 500, 500});
    HttpBackend b(stub_config(stub));
    CHECK_THROWS_AS(b.chat(user("hello")), BackendError);
    CHECK(stub.hits() == 3);
    CHECK(b.call_log().size() == 1);
    CHECK_FALSE(b.call_log()[0].ok());
  }

  SUBCASE("client errors fail immediately") {
    for (int status : {400, 401}) {
      Stub stub({status});
      HttpBackend b(stub_config(stub));
      CHECK_THROWS_AS(b.chat(user("hello")), BackendError);
      CHECK(stub.hits() == 1);
    }
  }

  SUBCASE("unreachable endpoint exhausts retries") {
    BackendConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.model_name = "none";
    c.max_retries = 1;
    c.backoff_base_s = 0.0;
    c.timeout_s = 1.0;
    HttpBackend b(c);
    CHECK_THROWS_AS(b.chat(user("hello")), BackendError);
  }
}

TEST_CASE("concurrent calls log one entry each") {
  std::vector<ScriptEntry> script(64, {"r", std::nullopt});
  ScriptedBackend b(script);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 8; ++i) b.chat(user("x"));
    });
  }
  for (auto& t : threads) t.join();
  CHECK(b.call_log().size() == 64);
  CHECK(b.consumed() == 64);
}
