#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlrl::model_client {

struct GenerationRequest {
  std::string prompt;
  std::vector<std::string> stop_sequences;
  int max_new_tokens = 512;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  bool want_logprobs = false;
};

enum class StopKind { StopSequence, EndOfTurn, LengthCap };

struct GenerationResult {
  std::string text;  // includes the matched stop sequence when one fired
  StopKind stop_kind = StopKind::EndOfTurn;
  int stop_sequence_index = -1;  // into the request's list; -1 otherwise
  int token_count = 0;
  std::optional<std::vector<double>> per_token_logprobs;
};

// Deterministic reference tokenization: each token is an optional whitespace
// run followed by either a word ([A-Za-z0-9_]+) or a single other character.
// Concatenating the tokens reproduces the input byte-for-byte, so prefixes of
// the token list are valid truncations.
std::vector<std::string> scripted_tokenize(std::string_view text);

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual GenerationResult generate(const GenerationRequest& req) = 0;

  // Token accounting for text the model did not produce (prompts, appended
  // feedback). Defaults to the reference tokenization so scripted runs are
  // exactly reproducible; HTTP deployments may override with a server-side
  // tokenizer adapter.
  virtual int count_tokens(std::string_view text) const;
};

// Replays canned fragments keyed by prompt predicates; first matching rule
// wins and its fragments cycle across hits. Drives every offline test.
class ScriptedModel : public ModelBackend {
 public:
  using Predicate = std::function<bool(const GenerationRequest&)>;

  struct Rule {
    Predicate matches;
    std::vector<std::string> fragments;
  };

  explicit ScriptedModel(std::vector<Rule> rules);

  // Throws NoScriptMatchError when no rule matches.
  GenerationResult generate(const GenerationRequest& req) override;

  static Rule when_contains(std::string needle, std::vector<std::string> fragments);
  static Rule when_ends_with(std::string suffix, std::vector<std::string> fragments);
  static Rule always(std::vector<std::string> fragments);

 private:
  std::vector<Rule> rules_;
  std::vector<std::size_t> cursor_;  // per-rule fragment position
  mutable std::mutex mu_;
};

// Applies stop-sequence/length-cap semantics to a raw fragment: truncate at
// the first stop occurrence (inclusive), then enforce the token cap. Shared
// by the scripted backend and the HTTP client's local rescan.
GenerationResult finalize_fragment(std::string fragment, const GenerationRequest& req,
                                   const ModelBackend& tokenizer);

struct HttpClientConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8000"
  std::string model;
  std::string api_key_env = "SQLRL_API_KEY";  // bearer token source, optional
  int max_concurrent = 8;
  double timeout_seconds = 120.0;
  // Overrides count_tokens when the deployment has a real tokenizer endpoint.
  std::function<int(std::string_view)> count_tokens_override;
};

// OpenAI-compatible /v1/completions client. Requests include the stop list
// and ask the server to keep the stop string in the text; a local rescan
// re-applies the stop semantics in case the server strips or overshoots.
class HttpModelClient : public ModelBackend {
 public:
  explicit HttpModelClient(HttpClientConfig cfg);
  ~HttpModelClient() override;

  // Throws EndpointUnavailableError (transport/HTTP failure, retriable) or
  // MalformedResponseError (unparseable payload).
  GenerationResult generate(const GenerationRequest& req) override;

  int count_tokens(std::string_view text) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sqlrl::model_client
