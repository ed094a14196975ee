#include "sqlrl/model_client.hpp"

#include <cctype>
#include <utility>

#include "sqlrl/errors.hpp"

namespace sqlrl::model_client {

namespace {

bool is_word(char ch) {
  unsigned char c = static_cast<unsigned char>(ch);
  return std::isalnum(c) != 0 || ch == '_';
}

bool is_space(char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; }

}  // namespace

std::vector<std::string> scripted_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    std::size_t start = i;
    while (i < n && is_space(text[i])) ++i;
    if (i == n) {
      // Trailing whitespace forms a token of its own so concatenation stays
      // lossless.
      tokens.emplace_back(text.substr(start));
      break;
    }
    if (is_word(text[i])) {
      while (i < n && is_word(text[i])) ++i;
    } else {
      ++i;
    }
    tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

int ModelBackend::count_tokens(std::string_view text) const {
  return static_cast<int>(scripted_tokenize(text).size());
}

GenerationResult finalize_fragment(std::string fragment, const GenerationRequest& req,
                                   const ModelBackend& tokenizer) {
  GenerationResult out;
  out.stop_kind = StopKind::EndOfTurn;

  // Earliest stop occurrence wins; ties go to the lower index.
  std::size_t best_pos = std::string::npos;
  int best_index = -1;
  for (std::size_t s = 0; s < req.stop_sequences.size(); ++s) {
    const std::string& stop = req.stop_sequences[s];
    if (stop.empty()) continue;
    std::size_t pos = fragment.find(stop);
    if (pos == std::string::npos) continue;
    if (pos < best_pos) {
      best_pos = pos;
      best_index = static_cast<int>(s);
    }
  }
  if (best_index >= 0) {
    fragment.resize(best_pos + req.stop_sequences[best_index].size());
    out.stop_kind = StopKind::StopSequence;
    out.stop_sequence_index = best_index;
  }

  auto tokens = scripted_tokenize(fragment);
  if (static_cast<int>(tokens.size()) > req.max_new_tokens) {
    std::string capped;
    for (int i = 0; i < req.max_new_tokens; ++i) capped += tokens[i];
    fragment = std::move(capped);
    out.stop_kind = StopKind::LengthCap;
    out.stop_sequence_index = -1;
    out.token_count = req.max_new_tokens;
  } else {
    out.token_count = static_cast<int>(tokens.size());
  }
  out.text = std::move(fragment);

  if (req.want_logprobs) {
    // Deterministic placeholder stream; real log-probs come from the HTTP
    // backend.
    out.per_token_logprobs.emplace(static_cast<std::size_t>(out.token_count), -0.5);
  }
  (void)tokenizer;
  return out;
}

ScriptedModel::ScriptedModel(std::vector<Rule> rules)
    : rules_(std::move(rules)), cursor_(rules_.size(), 0) {}

GenerationResult ScriptedModel::generate(const GenerationRequest& req) {
  std::string fragment;
  {
    std::lock_guard<std::mutex> lock(mu_);
    bool matched = false;
    for (std::size_t r = 0; r < rules_.size(); ++r) {
      if (!rules_[r].matches(req)) continue;
      const auto& frags = rules_[r].fragments;
      if (frags.empty()) break;
      fragment = frags[cursor_[r] % frags.size()];
      ++cursor_[r];
      matched = true;
      break;
    }
    if (!matched) {
      throw NoScriptMatchError("no scripted rule matches prompt tail: ..." +
                               std::string(req.prompt.size() > 60
                                               ? req.prompt.substr(req.prompt.size() - 60)
                                               : req.prompt));
    }
  }
  return finalize_fragment(std::move(fragment), req, *this);
}

ScriptedModel::Rule ScriptedModel::when_contains(std::string needle,
                                                 std::vector<std::string> fragments) {
  return Rule{[needle = std::move(needle)](const GenerationRequest& req) {
                return req.prompt.find(needle) != std::string::npos;
              },
              std::move(fragments)};
}

ScriptedModel::Rule ScriptedModel::when_ends_with(std::string suffix,
                                                  std::vector<std::string> fragments) {
  return Rule{[suffix = std::move(suffix)](const GenerationRequest& req) {
                return req.prompt.size() >= suffix.size() &&
                       req.prompt.compare(req.prompt.size() - suffix.size(),
                                          suffix.size(), suffix) == 0;
              },
              std::move(fragments)};
}

ScriptedModel::Rule ScriptedModel::always(std::vector<std::string> fragments) {
  return Rule{[](const GenerationRequest&) { return true; }, std::move(fragments)};
}

}  // namespace sqlrl::model_client
