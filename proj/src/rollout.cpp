#include "sqlrl/rollout.hpp"

#include <atomic>
#include <thread>

#include "sqlrl/errors.hpp"
#include "sqlrl/prompt.hpp"

namespace sqlrl::rollout {

IntermediateBlock find_intermediate_block(const std::string& fragment) {
  IntermediateBlock m;
  const std::size_t close = fragment.find(markup::kIntermediateSqlClose);
  if (close == std::string::npos) return m;
  const std::size_t open = fragment.rfind(markup::kIntermediateSqlOpen, close);
  if (open == std::string::npos) return m;
  const std::size_t body_begin = open + markup::kIntermediateSqlOpen.size();
  m.found = true;
  m.body = fragment.substr(body_begin, close - body_begin);
  return m;
}

namespace {

void append_span(std::vector<TokenSpan>& spans, std::size_t& cursor,
                 std::size_t tokens, markup::Origin origin) {
  if (tokens == 0) return;
  spans.push_back({cursor, cursor + tokens, origin});
  cursor += tokens;
}

}  // namespace

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::FinalSqlEmitted: return "final_sql_emitted";
    case Termination::BudgetExhausted: return "budget_exhausted";
    case Termination::InteractionCapHit: return "interaction_cap_hit";
    case Termination::ClientError: return "client_error";
    case Termination::StoppedWithoutFinalSql: return "stopped_without_final_sql";
  }
  return "unknown";
}

RolloutOutcome run_rollout(const dataset::DatasetExample& example,
                           sqlexec::Database& db,
                           model_client::ModelBackend& backend,
                           const RolloutConfig& cfg, std::uint64_t seed) {
  RolloutOutcome out;
  out.seed = seed;

  const std::string system_prompt = prompt::assemble(
      prompt::Style::ExecutionAware, example.schema_prompt,
      example.matched_contents, example.question, example.evidence);

  std::size_t token_cursor = 0;
  int used_tokens = 0;
  int interactions = 0;
  Termination termination = Termination::StoppedWithoutFinalSql;
  bool turn_over = false;

  while (!turn_over) {
    if (interactions >= cfg.max_interactions) {
      termination = Termination::InteractionCapHit;
      break;
    }
    if (used_tokens >= cfg.max_total_tokens) {
      termination = Termination::BudgetExhausted;
      break;
    }

    model_client::GenerationRequest req;
    req.prompt = system_prompt + out.text;
    req.stop_sequences = {std::string(markup::kIntermediateSqlClose),
                          cfg.end_of_turn_marker};
    req.max_new_tokens = cfg.max_total_tokens - used_tokens;
    req.temperature = cfg.temperature;
    req.seed = seed;

    model_client::GenerationResult res;
    try {
      res = backend.generate(req);
    } catch (const Error&) {
      termination = Termination::ClientError;
      break;
    }

    std::string fragment = res.text;
    int fragment_tokens = res.token_count;
    const bool stopped_on_eot =
        res.stop_kind == model_client::StopKind::StopSequence &&
        res.stop_sequence_index == 1;
    if (stopped_on_eot) {
      // The turn marker is a chat-template artifact, not trace content.
      fragment.resize(fragment.size() - cfg.end_of_turn_marker.size());
      fragment_tokens = backend.count_tokens(fragment);
    }

    out.text += fragment;
    append_span(out.token_spans, token_cursor,
                static_cast<std::size_t>(fragment_tokens), markup::Origin::Model);
    used_tokens += fragment_tokens;

    if (res.stop_kind == model_client::StopKind::LengthCap) {
      termination = Termination::BudgetExhausted;
      break;
    }
    if (stopped_on_eot || res.stop_kind == model_client::StopKind::EndOfTurn) {
      turn_over = true;
      break;
    }

    auto block = find_intermediate_block(fragment);
    if (!block.found) {
      // Stray close tag with no opening: nothing to execute, turn ends.
      turn_over = true;
      break;
    }

    std::string feedback;
    try {
      const std::string sql = markup::extract_sql(block.body);
      feedback = sqlexec::render_feedback(
          db.execute(sql, cfg.row_cap, cfg.per_query_timeout));
    } catch (const EmptySqlError&) {
      feedback = std::string(kMalformedSqlNotice);
    }
    const std::string result_block =
        std::string(markup::kResultOpen) + "\n" + feedback + "\n" +
        std::string(markup::kResultClose);
    const int feedback_tokens = backend.count_tokens(result_block);
    out.text += result_block;
    append_span(out.token_spans, token_cursor,
                static_cast<std::size_t>(feedback_tokens),
                markup::Origin::Environment);
    used_tokens += feedback_tokens;
    ++interactions;
  }

  out.trace = markup::parse_trace(out.text);
  out.final_sql = out.trace.final_sql;
  out.interactions_used = interactions;
  out.total_tokens = used_tokens;
  if (turn_over) {
    termination = out.final_sql.has_value() ? Termination::FinalSqlEmitted
                                            : Termination::StoppedWithoutFinalSql;
  }
  // Cap/budget/client terminations keep their loop-exit reason; final_sql is
  // still surfaced when a final block made it into the text before the stop.
  out.termination = termination;
  out.loss_mask = build_loss_mask(out.trace, out.token_spans);
  return out;
}

std::vector<RolloutOutcome> run_group(const dataset::DatasetExample& example,
                                      model_client::ModelBackend& backend,
                                      const RolloutConfig& cfg, int group_size,
                                      int max_workers) {
  std::vector<RolloutOutcome> outcomes(static_cast<std::size_t>(group_size));
  if (group_size <= 0) return outcomes;

  int workers = max_workers > 0
                    ? max_workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers <= 0) workers = 1;
  if (workers > group_size) workers = group_size;

  std::atomic<int> next{0};
  auto work = [&] {
    sqlexec::Database db(example.db_path);
    for (int i = next.fetch_add(1); i < group_size; i = next.fetch_add(1)) {
      outcomes[static_cast<std::size_t>(i)] =
          run_rollout(example, db, backend, cfg,
                      cfg.base_seed + static_cast<std::uint64_t>(i));
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return outcomes;
}

std::vector<bool> build_loss_mask(const markup::Trace& trace,
                                  const std::vector<TokenSpan>& token_spans) {
  std::size_t expected_begin = 0;
  std::size_t environment_spans = 0;
  for (const auto& span : token_spans) {
    if (span.begin != expected_begin || span.end <= span.begin) {
      throw InconsistentSpansError(
          "token spans must be sorted, nonempty, and gap-free: span [" +
          std::to_string(span.begin) + "," + std::to_string(span.end) +
          ") does not start at " + std::to_string(expected_begin));
    }
    expected_begin = span.end;
    if (span.origin == markup::Origin::Environment) ++environment_spans;
  }

  // Every environment append parses to at least one Result segment, but the
  // model may emit fake <result> text of its own, so only the impossible
  // direction is an error.
  std::size_t result_segments = 0;
  for (const auto& seg : trace.segments) {
    if (seg.kind == markup::SegmentKind::Result) ++result_segments;
  }
  if (environment_spans > result_segments) {
    throw InconsistentSpansError(
        "more environment spans (" + std::to_string(environment_spans) +
        ") than result segments (" + std::to_string(result_segments) + ")");
  }

  std::vector<bool> mask(expected_begin, true);
  for (const auto& span : token_spans) {
    if (span.origin != markup::Origin::Environment) continue;
    for (std::size_t i = span.begin; i < span.end; ++i) mask[i] = false;
  }
  return mask;
}

}  // namespace sqlrl::rollout
