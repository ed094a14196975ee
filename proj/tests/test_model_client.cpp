#include "sqlrl/model_client.hpp"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "sqlrl/errors.hpp"

using namespace sqlrl;
using namespace sqlrl::model_client;

namespace {

std::string concat(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

GenerationRequest basic_request(std::string prompt) {
  GenerationRequest req;
  req.prompt = std::move(prompt);
  req.stop_sequences = {"</intermediate_sql>", "<im_end>"};
  req.max_new_tokens = 512;
  return req;
}

// One-endpoint completions server whose behavior each test swaps in.
class FakeEndpoint {
 public:
  FakeEndpoint() {
    server_.Post("/v1/completions",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   handler_(req, res);
                 });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  void respond_with(std::function<void(const httplib::Request&, httplib::Response&)> h) {
    handler_ = std::move(h);
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::function<void(const httplib::Request&, httplib::Response&)> handler_ =
      [](const httplib::Request&, httplib::Response& res) { res.status = 500; };
};

HttpClientConfig endpoint_config(const FakeEndpoint& ep) {
  HttpClientConfig cfg;
  cfg.base_url = ep.base_url();
  cfg.model = "test-model";
  cfg.timeout_seconds = 5.0;
  return cfg;
}

}  // namespace

TEST_CASE("reference tokenization is lossless and prefix-truncatable") {
  auto toks = scripted_tokenize("SELECT a FROM t");
  CHECK(toks == std::vector<std::string>{"SELECT", " a", " FROM", " t"});
  CHECK(scripted_tokenize("").empty());
  CHECK(scripted_tokenize("   ") == std::vector<std::string>{"   "});
  CHECK(scripted_tokenize("<think>") ==
        std::vector<std::string>{"<", "think", ">"});

  std::mt19937 rng(11);
  const std::string alphabet = "ab _\n<>`;SELECT019*";
  for (int iter = 0; iter < 200; ++iter) {
    std::string s;
    int len = static_cast<int>(rng() % 80);
    for (int i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    CAPTURE(s);
    auto tokens = scripted_tokenize(s);
    CHECK(concat(tokens) == s);
    for (const auto& t : tokens) CHECK_FALSE(t.empty());
  }
}

TEST_CASE("scripted backend replays fragments deterministically") {
  SUBCASE("catch-all rule answers every prompt identically") {
    ScriptedModel model({ScriptedModel::always({"hello world"})});
    for (int i = 0; i < 3; ++i) {
      auto res = model.generate(basic_request("anything " + std::to_string(i)));
      CHECK(res.text == "hello world");
      CHECK(res.stop_kind == StopKind::EndOfTurn);
      CHECK(res.token_count == 2);
    }
  }
  SUBCASE("empty script refuses to answer") {
    ScriptedModel empty({});
    CHECK_THROWS_AS(empty.generate(basic_request("Q")), NoScriptMatchError);
  }
  SUBCASE("first matching rule wins") {
    ScriptedModel model({
        ScriptedModel::when_contains("alpha", {"A"}),
        ScriptedModel::always({"B"}),
    });
    CHECK(model.generate(basic_request("has alpha inside")).text == "A");
    CHECK(model.generate(basic_request("nothing else")).text == "B");
  }
  SUBCASE("fragments cycle per rule hit") {
    ScriptedModel model({ScriptedModel::always({"one", "two"})});
    CHECK(model.generate(basic_request("p")).text == "one");
    CHECK(model.generate(basic_request("p")).text == "two");
    CHECK(model.generate(basic_request("p")).text == "one");
  }
  SUBCASE("suffix predicate sees the growing context") {
    ScriptedModel model({
        ScriptedModel::when_ends_with("</result>", {"after feedback"}),
        ScriptedModel::always({"first turn"}),
    });
    CHECK(model.generate(basic_request("prompt")).text == "first turn");
    CHECK(model.generate(basic_request("prompt ... </result>")).text ==
          "after feedback");
  }
}

TEST_CASE("stop sequences truncate inclusively at the first occurrence") {
  ScriptedModel model({ScriptedModel::always(
      {"<intermediate_sql>\n```sql\nSELECT 1\n```\n</intermediate_sql> trailing junk"})});
  auto res = model.generate(basic_request("Q1"));
  CHECK(res.stop_kind == StopKind::StopSequence);
  CHECK(res.stop_sequence_index == 0);
  const std::string want =
      "<intermediate_sql>\n```sql\nSELECT 1\n```\n</intermediate_sql>";
  CHECK(res.text == want);

  SUBCASE("whichever stop appears first wins, not list order") {
    ScriptedModel m2({ScriptedModel::always({"done<im_end> then </intermediate_sql>"})});
    auto r2 = m2.generate(basic_request("Q"));
    CHECK(r2.stop_kind == StopKind::StopSequence);
    CHECK(r2.stop_sequence_index == 1);
    CHECK(r2.text == "done<im_end>");
  }
}

TEST_CASE("generated text never extends past the first stop occurrence") {
  std::mt19937 rng(23);
  const std::vector<std::string> pieces = {"<think>x</think>", " SELECT 1 ",
                                           "</intermediate_sql>", "<im_end>",
                                           "\n", "word"};
  for (int iter = 0; iter < 200; ++iter) {
    std::string frag;
    int len = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < len; ++i) frag += pieces[rng() % pieces.size()];
    ScriptedModel model({ScriptedModel::always({frag})});
    auto req = basic_request("Q");
    auto res = model.generate(req);
    CAPTURE(frag);
    for (const auto& stop : req.stop_sequences) {
      std::size_t pos = res.text.find(stop);
      if (pos != std::string::npos) {
        // A stop may appear only as the terminal suffix.
        CHECK(pos + stop.size() == res.text.size());
        CHECK(res.stop_kind == StopKind::StopSequence);
      }
    }
  }
}

TEST_CASE("length cap truncates at token boundaries") {
  const std::string frag = "alpha beta gamma delta epsilon zeta eta theta";
  ScriptedModel model({ScriptedModel::always({frag})});
  auto req = basic_request("Q");
  req.max_new_tokens = 5;
  auto res = model.generate(req);
  CHECK(res.stop_kind == StopKind::LengthCap);
  CHECK(res.token_count == 5);
  CHECK(res.text == "alpha beta gamma delta epsilon");

  SUBCASE("cap measured after stop truncation") {
    ScriptedModel m2({ScriptedModel::always({"a b c</intermediate_sql> x y z w q r s t"})});
    auto req2 = basic_request("Q");
    req2.max_new_tokens = 64;
    auto r2 = m2.generate(req2);
    CHECK(r2.stop_kind == StopKind::StopSequence);  // stop fits under the cap
  }
}

TEST_CASE("logprob request yields one entry per token") {
  ScriptedModel model({ScriptedModel::always({"one two three"})});
  auto req = basic_request("Q");
  req.want_logprobs = true;
  auto res = model.generate(req);
  REQUIRE(res.per_token_logprobs.has_value());
  CHECK(res.per_token_logprobs->size() == static_cast<std::size_t>(res.token_count));
}

TEST_CASE("http client round-trips a completions exchange") {
  FakeEndpoint ep;
  nlohmann::json captured;
  std::string auth_header;
  ep.respond_with([&](const httplib::Request& req, httplib::Response& res) {
    captured = nlohmann::json::parse(req.body);
    auth_header = req.get_header_value("Authorization");
    nlohmann::json payload{
        {"choices",
         {{{"text", "fragment</intermediate_sql>"},
           {"finish_reason", "stop"},
           {"logprobs", {{"token_logprobs", {-0.1, -0.2, -0.3, -0.4, -0.5, -0.6}}}}}}},
        {"usage", {{"completion_tokens", 6}}},
    };
    res.set_content(payload.dump(), "application/json");
  });

  setenv("SQLRL_API_KEY", "sekrit", 1);
  HttpModelClient client(endpoint_config(ep));
  auto req = basic_request("PROMPT TEXT");
  req.seed = 42;
  req.want_logprobs = true;
  req.max_new_tokens = 128;
  req.temperature = 0.7;
  auto res = client.generate(req);
  unsetenv("SQLRL_API_KEY");

  CHECK(res.text == "fragment</intermediate_sql>");
  CHECK(res.stop_kind == StopKind::StopSequence);
  CHECK(res.stop_sequence_index == 0);
  CHECK(res.token_count == 6);
  REQUIRE(res.per_token_logprobs.has_value());
  CHECK(res.per_token_logprobs->size() == 6);
  CHECK((*res.per_token_logprobs)[0] == -0.1);

  // Request plumbing: every knob reaches the wire.
  CHECK(captured["model"] == "test-model");
  CHECK(captured["prompt"] == "PROMPT TEXT");
  CHECK(captured["max_tokens"] == 128);
  CHECK(captured["temperature"] == 0.7);
  CHECK(captured["seed"] == 42);
  CHECK(captured["stop"][0] == "</intermediate_sql>");
  CHECK(captured["include_stop_str_in_output"] == true);
  CHECK(captured["logprobs"] == 0);
  CHECK(auth_header == "Bearer sekrit");
}

TEST_CASE("http client restores a server-stripped stop sequence") {
  FakeEndpoint ep;
  ep.respond_with([&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json payload{
        {"choices",
         {{{"text", "SELECT 1\n```\n"},  // server removed the stop string
           {"finish_reason", "stop"},
           {"matched_stop", "</intermediate_sql>"}}}},
        {"usage", {{"completion_tokens", 7}}},
    };
    res.set_content(payload.dump(), "application/json");
  });
  HttpModelClient client(endpoint_config(ep));
  auto res = client.generate(basic_request("Q"));
  CHECK(res.stop_kind == StopKind::StopSequence);
  CHECK(res.stop_sequence_index == 0);
  CHECK(res.text == "SELECT 1\n```\n</intermediate_sql>");
}

TEST_CASE("http client truncates a server overshoot past the stop") {
  FakeEndpoint ep;
  ep.respond_with([&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json payload{
        {"choices",
         {{{"text", "head<im_end>overshoot tail"}, {"finish_reason", "stop"}}}},
        {"usage", {{"completion_tokens", 9}}},
    };
    res.set_content(payload.dump(), "application/json");
  });
  HttpModelClient client(endpoint_config(ep));
  auto res = client.generate(basic_request("Q"));
  CHECK(res.text == "head<im_end>");
  CHECK(res.stop_kind == StopKind::StopSequence);
  CHECK(res.stop_sequence_index == 1);
  // The reported count covered the overshoot, so the client recounts.
  CHECK(res.token_count == static_cast<int>(scripted_tokenize(res.text).size()));
}

TEST_CASE("http client maps finish_reason length to the cap") {
  FakeEndpoint ep;
  ep.respond_with([&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json payload{
        {"choices", {{{"text", "partial outp"}, {"finish_reason", "length"}}}},
        {"usage", {{"completion_tokens", 3}}},
    };
    res.set_content(payload.dump(), "application/json");
  });
  HttpModelClient client(endpoint_config(ep));
  auto res = client.generate(basic_request("Q"));
  CHECK(res.stop_kind == StopKind::LengthCap);
  CHECK(res.token_count == 3);
  CHECK(res.text == "partial outp");
}

TEST_CASE("http client error taxonomy") {
  SUBCASE("http 5xx is an endpoint failure") {
    FakeEndpoint ep;
    ep.respond_with([](const httplib::Request&, httplib::Response& res) {
      res.status = 503;
      res.set_content("overloaded", "text/plain");
    });
    HttpModelClient client(endpoint_config(ep));
    CHECK_THROWS_AS(client.generate(basic_request("Q")), EndpointUnavailableError);
  }
  SUBCASE("unreachable host is an endpoint failure") {
    HttpClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:9";  // discard port, nothing listens
    cfg.model = "m";
    cfg.timeout_seconds = 0.5;
    HttpModelClient client(cfg);
    CHECK_THROWS_AS(client.generate(basic_request("Q")), EndpointUnavailableError);
  }
  SUBCASE("non-json body is a malformed response") {
    FakeEndpoint ep;
    ep.respond_with([](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>proxy garbage</html>", "text/html");
    });
    HttpModelClient client(endpoint_config(ep));
    CHECK_THROWS_AS(client.generate(basic_request("Q")), MalformedResponseError);
  }
  SUBCASE("missing choices is a malformed response") {
    FakeEndpoint ep;
    ep.respond_with([](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"object":"completion"})", "application/json");
    });
    HttpModelClient client(endpoint_config(ep));
    CHECK_THROWS_AS(client.generate(basic_request("Q")), MalformedResponseError);
  }
}

TEST_CASE("http client serves concurrent requests") {
  FakeEndpoint ep;
  std::atomic<int> hits{0};
  ep.respond_with([&](const httplib::Request& req, httplib::Response& res) {
    hits.fetch_add(1);
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json payload{
        {"choices",
         {{{"text", "echo:" + body["prompt"].get<std::string>()},
           {"finish_reason", "stop"}}}},
        {"usage", {{"completion_tokens", 2}}},
    };
    res.set_content(payload.dump(), "application/json");
  });
  auto cfg = endpoint_config(ep);
  cfg.max_concurrent = 4;
  HttpModelClient client(cfg);
  std::vector<std::thread> workers;
  std::vector<std::string> results(8);
  for (int i = 0; i < 8; ++i) {
    workers.emplace_back([&, i] {
      auto req = basic_request("p" + std::to_string(i));
      results[static_cast<std::size_t>(i)] = client.generate(req).text;
    });
  }
  for (auto& w : workers) w.join();
  CHECK(hits.load() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(results[static_cast<std::size_t>(i)] == "echo:p" + std::to_string(i));
  }
}
