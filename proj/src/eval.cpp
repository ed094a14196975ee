#include "sqlrl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include <json.hpp>

#include "sqlrl/errors.hpp"

namespace sqlrl::eval {

namespace {

using nlohmann::json;

std::optional<std::string> run_strategy(const dataset::DatasetExample& example,
                                        sqlexec::Database& db,
                                        model_client::ModelBackend& backend,
                                        const EvalConfig& cfg,
                                        std::string& termination) {
  switch (cfg.strategy) {
    case Strategy::Greedy: {
      auto outcome = rollout::run_rollout(example, db, backend, cfg.rollout,
                                          cfg.rollout.base_seed);
      termination = std::string(rollout::termination_name(outcome.termination));
      return outcome.final_sql;
    }
    case Strategy::Linear: {
      try {
        auto result = tree::decode_linear(example, db, backend, cfg.rollout,
                                          cfg.candidates);
        termination = "selected_of_" + std::to_string(result.candidates.size());
        return result.selected.final_sql;
      } catch (const NoCandidatesError&) {
        termination = "no_candidates";
        return std::nullopt;
      }
    }
    case Strategy::Tree: {
      tree::TreeBudget budget;
      budget.max_candidates = cfg.candidates;
      budget.branching = cfg.branching;
      try {
        auto result = tree::decode_tree(example, db, backend, cfg.rollout, budget);
        termination = "selected_of_" + std::to_string(result.candidates.size());
        return result.selected.final_sql;
      } catch (const NoCandidatesError&) {
        // Documented fallback: no path finished, take the greedy rollout.
        rollout::RolloutConfig greedy_cfg = cfg.rollout;
        greedy_cfg.temperature = 0.0;
        auto outcome = rollout::run_rollout(example, db, backend, greedy_cfg,
                                            cfg.rollout.base_seed);
        termination = std::string("greedy_fallback_") +
                      std::string(rollout::termination_name(outcome.termination));
        return outcome.final_sql;
      }
    }
  }
  return std::nullopt;
}

ExampleResult evaluate_one(const dataset::DatasetExample& example,
                           model_client::ModelBackend& backend,
                           const EvalConfig& cfg) {
  ExampleResult r;
  r.question_id = example.question_id;
  r.difficulty = example.difficulty;

  sqlexec::Database db(example.db_path);
  r.predicted_sql = run_strategy(example, db, backend, cfg, r.termination);
  if (!r.predicted_sql.has_value()) {
    r.verdict = Verdict::Syntax;
    return r;
  }

  const auto pred = db.execute_full(*r.predicted_sql, cfg.rollout.per_query_timeout);
  if (pred.status != sqlexec::ExecStatus::Ok) {
    r.verdict = Verdict::Syntax;
    r.error_message = pred.error_message.value_or("execution failed");
    return r;
  }
  const auto gold = db.execute_full(example.gold_sql, cfg.rollout.per_query_timeout);
  if (gold.status != sqlexec::ExecStatus::Ok) {
    r.verdict = Verdict::Semantic;
    r.error_message = "gold failed: " + gold.error_message.value_or("unknown");
    return r;
  }

  r.correct = sqlexec::compare_results(pred, gold, *r.predicted_sql);
  r.verdict = r.correct ? Verdict::Correct : Verdict::Semantic;
  if (r.correct && cfg.compute_ves) {
    try {
      r.gold_time = sqlexec::time_execution(db, example.gold_sql,
                                            cfg.timing_repeats,
                                            cfg.rollout.per_query_timeout);
      r.pred_time = sqlexec::time_execution(db, *r.predicted_sql,
                                            cfg.timing_repeats,
                                            cfg.rollout.per_query_timeout);
      if (r.pred_time.count() > 0) {
        r.ves_term = std::sqrt(static_cast<double>(r.gold_time.count()) /
                               static_cast<double>(r.pred_time.count()));
      } else {
        r.ves_term = 1.0;  // unmeasurably fast on both sides
      }
    } catch (const Error& e) {
      r.ves_term = 0.0;
      r.error_message = std::string("timing failed: ") + e.what();
    }
  }
  return r;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", value);
  return buf;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Greedy: return "greedy";
    case Strategy::Linear: return "linear";
    case Strategy::Tree: return "tree";
  }
  return "greedy";
}

std::optional<Strategy> strategy_by_name(std::string_view name) {
  for (Strategy s : {Strategy::Greedy, Strategy::Linear, Strategy::Tree}) {
    if (name == strategy_name(s)) return s;
  }
  return std::nullopt;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Semantic: return "semantic";
    case Verdict::Syntax: return "syntax";
  }
  return "syntax";
}

EvalReport evaluate(const std::vector<dataset::DatasetExample>& examples,
                    model_client::ModelBackend& backend, const EvalConfig& cfg) {
  EvalReport report;
  report.total = static_cast<int>(examples.size());
  report.examples.resize(examples.size());
  if (examples.empty()) return report;

  int workers = cfg.workers > 0
                    ? cfg.workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers <= 0) workers = 1;
  if (workers > static_cast<int>(examples.size())) {
    workers = static_cast<int>(examples.size());
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < examples.size();
         i = next.fetch_add(1)) {
      try {
        report.examples[i] = evaluate_one(examples[i], backend, cfg);
      } catch (const std::exception& e) {
        // A failed example is a recorded syntax failure, never a sweep abort.
        ExampleResult r;
        r.question_id = examples[i].question_id;
        r.difficulty = examples[i].difficulty;
        r.verdict = Verdict::Syntax;
        r.error_message = e.what();
        report.examples[i] = r;
      }
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

  std::stable_sort(report.examples.begin(), report.examples.end(),
                   [](const ExampleResult& a, const ExampleResult& b) {
                     return a.question_id < b.question_id;
                   });

  double ves_sum = 0.0;
  for (const auto& r : report.examples) {
    switch (r.verdict) {
      case Verdict::Correct: ++report.correct_count; break;
      case Verdict::Semantic: ++report.semantic_count; break;
      case Verdict::Syntax: ++report.syntax_count; break;
    }
    ves_sum += r.ves_term;
    if (!r.difficulty.empty()) {
      auto& bucket = report.by_difficulty[r.difficulty];
      ++bucket.total;
      if (r.correct) ++bucket.correct;
    }
  }
  report.ex = 100.0 * report.correct_count / report.total;
  report.ves = cfg.compute_ves ? 100.0 * ves_sum / report.total : 0.0;
  for (auto& [difficulty, bucket] : report.by_difficulty) {
    bucket.ex = 100.0 * bucket.correct / bucket.total;
  }
  return report;
}

std::string report_jsonl(const EvalReport& report, bool include_timings) {
  std::string out;
  for (const auto& r : report.examples) {
    json j{{"type", "example"},
           {"question_id", r.question_id},
           {"difficulty", r.difficulty},
           {"verdict", std::string(verdict_name(r.verdict))},
           {"correct", r.correct},
           {"termination", r.termination},
           {"error", r.error_message}};
    j["predicted_sql"] = r.predicted_sql.has_value() ? json(*r.predicted_sql)
                                                     : json(nullptr);
    if (include_timings) {
      j["ves_term"] = r.ves_term;
      j["pred_ns"] = r.pred_time.count();
      j["gold_ns"] = r.gold_time.count();
    }
    out += j.dump();
    out += '\n';
  }
  json buckets = json::object();
  for (const auto& [difficulty, bucket] : report.by_difficulty) {
    buckets[difficulty] = json{
        {"total", bucket.total}, {"correct", bucket.correct}, {"ex", bucket.ex}};
  }
  json summary{{"type", "summary"},
               {"total", report.total},
               {"correct", report.correct_count},
               {"syntax", report.syntax_count},
               {"semantic", report.semantic_count},
               {"ex", report.ex},
               {"by_difficulty", buckets}};
  if (include_timings) summary["ves"] = report.ves;
  out += summary.dump();
  out += '\n';
  return out;
}

std::string render_summary(const EvalReport& report, bool include_timings) {
  std::string out;
  out += "examples: " + std::to_string(report.total) +
         "  correct: " + std::to_string(report.correct_count) +
         "  syntax: " + std::to_string(report.syntax_count) +
         "  semantic: " + std::to_string(report.semantic_count) + "\n";
  out += "EX: " + format_percent(report.ex);
  if (include_timings) out += "  VES: " + format_percent(report.ves);
  out += "\n";
  if (!report.by_difficulty.empty()) {
    out += "difficulty breakdown:\n";
    for (const auto& [difficulty, bucket] : report.by_difficulty) {
      out += "  " + difficulty + ": " + std::to_string(bucket.correct) + "/" +
             std::to_string(bucket.total) + " (EX " + format_percent(bucket.ex) +
             ")\n";
    }
  }
  return out;
}

int report_exit_code(const EvalReport& report) {
  return report.correct_count == report.total ? 0 : 1;
}

GoldEchoBackend::GoldEchoBackend(std::vector<dataset::DatasetExample> examples)
    : examples_(std::move(examples)) {}

void GoldEchoBackend::override_sql(const std::string& question_id,
                                   const std::string& sql) {
  overrides_[question_id] = sql;
}

model_client::GenerationResult GoldEchoBackend::generate(
    const model_client::GenerationRequest& req) {
  for (const auto& example : examples_) {
    if (example.question.empty() ||
        req.prompt.find(example.question) == std::string::npos) {
      continue;
    }
    const auto hit = overrides_.find(example.question_id);
    const std::string& sql =
        hit != overrides_.end() ? hit->second : example.gold_sql;
    const std::string fragment = "<think>replaying the reference query.</think>\n"
                                 "<final_sql>\n```sql\n" +
                                 sql + "\n```\n</final_sql><im_end>";
    return model_client::finalize_fragment(fragment, req, *this);
  }
  throw NoScriptMatchError("no dataset question matches the request prompt");
}

}  // namespace sqlrl::eval
