#include <algorithm>
#include <cstdlib>
#include <semaphore>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "sqlrl/errors.hpp"
#include "sqlrl/model_client.hpp"

namespace sqlrl::model_client {

namespace {

constexpr int kMaxConcurrencyCeiling = 256;

}  // namespace

struct HttpModelClient::Impl {
  HttpClientConfig cfg;
  std::counting_semaphore<kMaxConcurrencyCeiling> slots;

  explicit Impl(HttpClientConfig c)
      : cfg(std::move(c)),
        slots(std::clamp(cfg.max_concurrent, 1, kMaxConcurrencyCeiling)) {}
};

HttpModelClient::HttpModelClient(HttpClientConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(cfg))) {}

HttpModelClient::~HttpModelClient() = default;

int HttpModelClient::count_tokens(std::string_view text) const {
  if (impl_->cfg.count_tokens_override) return impl_->cfg.count_tokens_override(text);
  return ModelBackend::count_tokens(text);
}

GenerationResult HttpModelClient::generate(const GenerationRequest& req) {
  impl_->slots.acquire();
  struct Release {
    Impl* impl;
    ~Release() { impl->slots.release(); }
  } release{impl_.get()};

  nlohmann::json body{
      {"model", impl_->cfg.model},
      {"prompt", req.prompt},
      {"max_tokens", req.max_new_tokens},
      {"temperature", req.temperature},
      {"include_stop_str_in_output", true},
  };
  if (!req.stop_sequences.empty()) body["stop"] = req.stop_sequences;
  if (req.seed.has_value()) body["seed"] = *req.seed;
  if (req.want_logprobs) body["logprobs"] = 0;

  httplib::Client cli(impl_->cfg.base_url);
  const auto timeout = std::chrono::duration<double>(impl_->cfg.timeout_seconds);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  if (const char* key = std::getenv(impl_->cfg.api_key_env.c_str());
      key != nullptr && *key != '\0') {
    cli.set_bearer_token_auth(key);
  }

  auto res = cli.Post("/v1/completions", body.dump(), "application/json");
  if (!res) {
    throw EndpointUnavailableError("completions request failed: " +
                                   httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw EndpointUnavailableError("completions endpoint returned HTTP " +
                                   std::to_string(res->status) + ": " +
                                   res->body.substr(0, 200));
  }

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("completions payload is not JSON: ") +
                                 e.what());
  }

  try {
    const auto& choices = doc.at("choices");
    if (!choices.is_array() || choices.empty()) {
      throw MalformedResponseError("completions payload has no choices");
    }
    const auto& choice = choices.at(0);
    GenerationResult out;
    out.text = choice.at("text").get<std::string>();
    const std::string finish =
        choice.value("finish_reason", std::string("stop"));

    // Local rescan: the authoritative stop semantics are ours, whatever the
    // server did. Earliest occurrence wins, ties to the lower index.
    std::size_t best_pos = std::string::npos;
    int best_index = -1;
    for (std::size_t s = 0; s < req.stop_sequences.size(); ++s) {
      const std::string& stop = req.stop_sequences[s];
      if (stop.empty()) continue;
      std::size_t pos = out.text.find(stop);
      if (pos != std::string::npos && pos < best_pos) {
        best_pos = pos;
        best_index = static_cast<int>(s);
      }
    }

    std::optional<std::vector<double>> logprobs;
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("token_logprobs")) {
      std::vector<double> lp;
      for (const auto& v : choice["logprobs"]["token_logprobs"]) {
        lp.push_back(v.is_null() ? 0.0 : v.get<double>());
      }
      logprobs = std::move(lp);
    }

    int reported_tokens = -1;
    if (doc.contains("usage") && doc["usage"].contains("completion_tokens")) {
      reported_tokens = doc["usage"]["completion_tokens"].get<int>();
    } else if (logprobs.has_value()) {
      reported_tokens = static_cast<int>(logprobs->size());
    }

    if (best_index >= 0) {
      const std::size_t keep =
          best_pos + req.stop_sequences[best_index].size();
      const bool truncated = keep < out.text.size();
      out.text.resize(keep);
      out.stop_kind = StopKind::StopSequence;
      out.stop_sequence_index = best_index;
      out.token_count = truncated || reported_tokens < 0
                            ? count_tokens(out.text)
                            : reported_tokens;
    } else if (finish == "length") {
      out.stop_kind = StopKind::LengthCap;
      out.token_count = reported_tokens >= 0 ? reported_tokens
                                             : count_tokens(out.text);
    } else {
      // The server stopped on a sequence but stripped it from the text:
      // restore it so trace reconstruction sees the closing tag.
      int matched = -1;
      if (choice.contains("matched_stop") && choice["matched_stop"].is_string()) {
        const std::string ms = choice["matched_stop"].get<std::string>();
        for (std::size_t s = 0; s < req.stop_sequences.size(); ++s) {
          if (req.stop_sequences[s] == ms) {
            matched = static_cast<int>(s);
            break;
          }
        }
      }
      if (matched >= 0) {
        out.text += req.stop_sequences[matched];
        out.stop_kind = StopKind::StopSequence;
        out.stop_sequence_index = matched;
        out.token_count = reported_tokens >= 0
                              ? reported_tokens +
                                    count_tokens(req.stop_sequences[matched])
                              : count_tokens(out.text);
      } else {
        out.stop_kind = StopKind::EndOfTurn;
        out.token_count = reported_tokens >= 0 ? reported_tokens
                                               : count_tokens(out.text);
      }
    }

    if (logprobs.has_value()) {
      if (static_cast<int>(logprobs->size()) > out.token_count) {
        logprobs->resize(static_cast<std::size_t>(out.token_count));
      }
      out.per_token_logprobs = std::move(logprobs);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponseError(std::string("completions payload malformed: ") +
                                 e.what());
  }
}

}  // namespace sqlrl::model_client
