#pragma once

// Benchmark evaluation: run a decoding strategy over a dataset, grade each
// prediction by execution equivalence, and aggregate EX/VES plus the
// syntax/semantic error taxonomy into an order-stable report.

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlrl/dataset.hpp"
#include "sqlrl/model_client.hpp"
#include "sqlrl/rollout.hpp"
#include "sqlrl/sqlexec.hpp"
#include "sqlrl/tree_decode.hpp"

namespace sqlrl::eval {

enum class Strategy { Greedy, Linear, Tree };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> strategy_by_name(std::string_view name);

struct EvalConfig {
  Strategy strategy = Strategy::Greedy;
  int candidates = 16;  // K for linear and tree decoding
  int branching = 3;    // B for tree decoding
  rollout::RolloutConfig rollout;
  int workers = 0;  // 0 -> one per hardware thread, capped at #examples
  bool compute_ves = true;
  int timing_repeats = sqlexec::kDefaultTimingRepeats;
  bool include_timings = false;  // expose timing-derived fields in reports
};

// correct: execution-equivalent to gold. semantic: executed, wrong result.
// syntax: no prediction, engine error, or timeout.
enum class Verdict { Correct, Semantic, Syntax };

std::string_view verdict_name(Verdict v);

struct ExampleResult {
  std::string question_id;
  std::string difficulty;
  std::optional<std::string> predicted_sql;
  Verdict verdict = Verdict::Syntax;
  bool correct = false;
  double ves_term = 0.0;  // 1[correct] * sqrt(t_gold / t_pred)
  std::chrono::nanoseconds pred_time{0};
  std::chrono::nanoseconds gold_time{0};
  std::string termination;    // decoder diagnostic, free-form
  std::string error_message;  // nonempty when this example failed to evaluate
};

struct DifficultyBucket {
  int total = 0;
  int correct = 0;
  double ex = 0.0;
};

struct EvalReport {
  std::vector<ExampleResult> examples;  // sorted by question_id
  int total = 0;
  int correct_count = 0;
  int syntax_count = 0;
  int semantic_count = 0;
  double ex = 0.0;   // 100 * correct / total
  double ves = 0.0;  // 100 * mean of ves terms; 0 when compute_ves is off
  std::map<std::string, DifficultyBucket> by_difficulty;
};

// Runs the configured strategy on every example, grading with full
// materialization. Tree decoding falls back to a greedy rollout when no path
// emits a final SQL. Per-example failures are recorded in the report — the
// sweep itself never aborts. Examples run concurrently up to cfg.workers.
EvalReport evaluate(const std::vector<dataset::DatasetExample>& examples,
                    model_client::ModelBackend& backend, const EvalConfig& cfg);

// One line per example plus a trailing summary line. With include_timings
// false every timing-derived field (times, ves terms, VES) is omitted, making
// the bytes reproducible across runs.
std::string report_jsonl(const EvalReport& report, bool include_timings);

// Human-readable summary table, same timing-field rule.
std::string render_summary(const EvalReport& report, bool include_timings);

// CLI exit-code mapping: 0 all correct, 1 completed with failures recorded.
int report_exit_code(const EvalReport& report);

// Scripted stand-in for a trained policy: answers any request whose prompt
// contains a known question by emitting that example's gold SQL as a final
// block (overridable per question for fault-injection fixtures). Stateless,
// so results are independent of request interleaving.
class GoldEchoBackend : public model_client::ModelBackend {
 public:
  explicit GoldEchoBackend(std::vector<dataset::DatasetExample> examples);

  // Replaces the emitted SQL for one question (e.g. with a broken statement).
  void override_sql(const std::string& question_id, const std::string& sql);

  model_client::GenerationResult generate(
      const model_client::GenerationRequest& req) override;

 private:
  std::vector<dataset::DatasetExample> examples_;
  std::map<std::string, std::string> overrides_;
};

}  // namespace sqlrl::eval
