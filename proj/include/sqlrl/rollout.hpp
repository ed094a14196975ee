#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlrl/dataset.hpp"
#include "sqlrl/markup.hpp"
#include "sqlrl/model_client.hpp"
#include "sqlrl/sqlexec.hpp"

namespace sqlrl::rollout {

// Feedback text injected when an intermediate block carries no extractable
// statement; the turn still counts as an interaction so a malformed loop
// cannot spin forever.
inline constexpr std::string_view kMalformedSqlNotice =
    "Error: the intermediate block contains no executable SQL statement.";

struct RolloutConfig {
  int max_interactions = 10;  // N
  int max_total_tokens = 4096;
  int row_cap = 3;  // feedback rows per execution
  std::chrono::milliseconds per_query_timeout = sqlexec::kDefaultTimeout;
  double temperature = 0.0;
  std::uint64_t base_seed = 0;
  std::string end_of_turn_marker = "<im_end>";
};

enum class Termination {
  FinalSqlEmitted,
  BudgetExhausted,
  InteractionCapHit,
  ClientError,
  StoppedWithoutFinalSql,  // model ended its turn with no final block
};

std::string_view termination_name(Termination t);

// Half-open token range of one appended chunk (a model fragment or one
// environment feedback block). Spans partition [0, total_tokens).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  markup::Origin origin = markup::Origin::Model;

  bool operator==(const TokenSpan&) const = default;
};

struct RolloutOutcome {
  markup::Trace trace;           // parsed from text
  std::string text;              // generated context: fragments + feedback
  std::optional<std::string> final_sql;
  std::vector<bool> loss_mask;   // one entry per generated-context token
  Termination termination = Termination::StoppedWithoutFinalSql;
  int interactions_used = 0;
  std::uint64_t seed = 0;
  std::vector<TokenSpan> token_spans;
  int total_tokens = 0;
};

// Interleaved generate/execute/append loop. Generation stops on the
// intermediate-SQL close tag or the end-of-turn marker; a complete
// intermediate block is executed with the row cap and its rendered feedback
// is appended inside <result> tags; anything else ends the turn. Hard bounds:
// max_interactions and max_total_tokens. Backend failures terminate the
// rollout with ClientError; nothing propagates out.
RolloutOutcome run_rollout(const dataset::DatasetExample& example,
                           sqlexec::Database& db,
                           model_client::ModelBackend& backend,
                           const RolloutConfig& cfg, std::uint64_t seed);

// G independent rollouts with seeds base_seed + index, order-stable by index.
// Rollouts run concurrently up to max_workers (0 -> min(G, hardware)); each
// worker opens its own database handle on example.db_path.
std::vector<RolloutOutcome> run_group(const dataset::DatasetExample& example,
                                      model_client::ModelBackend& backend,
                                      const RolloutConfig& cfg, int group_size,
                                      int max_workers = 0);

// True everywhere except Environment spans. Validates that the spans are
// sorted, non-overlapping, gap-free from zero, and that the number of
// Environment spans does not exceed the trace's Result-segment count (the
// model may fake <result> text, but an environment append always parses to at
// least one Result segment); throws InconsistentSpansError otherwise.
std::vector<bool> build_loss_mask(const markup::Trace& trace,
                                  const std::vector<TokenSpan>& token_spans);

// Locates a complete intermediate block inside one generated fragment.
// Generation stops at the close tag, so a fragment holds at most one.
struct IntermediateBlock {
  bool found = false;
  std::string body;
};
IntermediateBlock find_intermediate_block(const std::string& fragment);

}  // namespace sqlrl::rollout
