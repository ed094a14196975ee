// Command-line surface: rollout, score, decode, eval.
//
// Exit codes: 0 success, 1 run completed with failures recorded,
// 2 configuration or IO error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqlrl/dataset.hpp"
#include "sqlrl/errors.hpp"
#include "sqlrl/eval.hpp"
#include "sqlrl/markup.hpp"
#include "sqlrl/model_client.hpp"
#include "sqlrl/records.hpp"
#include "sqlrl/rewards.hpp"
#include "sqlrl/rollout.hpp"
#include "sqlrl/sqlexec.hpp"
#include "sqlrl/tree_decode.hpp"

namespace {

using namespace sqlrl;

struct BackendOpts {
  std::string endpoint;
  std::string model;
  bool echo_gold = false;
};

struct ExampleOpts {
  std::string id = "cli";
  std::string db_path;
  std::string question;
  std::string evidence;
  std::string schema;
  std::string gold_sql;
};

struct BudgetOpts {
  int nums = 3;
  int max_interactions = 10;
  int max_tokens = 4096;
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

void add_backend_opts(CLI::App* cmd, BackendOpts& o) {
  cmd->add_option("--endpoint", o.endpoint,
                  "Completion server base URL (auth token read from "
                  "SQLRL_API_KEY)");
  cmd->add_option("--model", o.model, "Model name sent to the endpoint");
  cmd->add_flag("--echo-gold", o.echo_gold,
                "Offline backend that replays each example's gold SQL");
}

void add_example_opts(CLI::App* cmd, ExampleOpts& o) {
  cmd->add_option("--id", o.id, "Question id used in emitted records");
  cmd->add_option("--db", o.db_path, "SQLite database file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--question", o.question, "Natural-language question")
      ->required();
  cmd->add_option("--evidence", o.evidence, "Optional hint text");
  cmd->add_option("--schema", o.schema,
                  "Schema prompt (defaults to the database's CREATE "
                  "statements)");
  cmd->add_option("--gold-sql", o.gold_sql,
                  "Reference SQL (enables scoring and --echo-gold)");
}

void add_budget_opts(CLI::App* cmd, BudgetOpts& o) {
  cmd->add_option("--nums", o.nums, "Feedback rows per execution")
      ->check(CLI::IsMember({3, 6, 8}));
  cmd->add_option("--max-interactions", o.max_interactions,
                  "Intermediate-execution cap per rollout");
  cmd->add_option("--max-tokens", o.max_tokens, "Generated-token budget");
  cmd->add_option("--temperature", o.temperature, "Sampling temperature");
  cmd->add_option("--seed", o.seed, "Base RNG seed");
}

rollout::RolloutConfig make_rollout_config(const BudgetOpts& o) {
  rollout::RolloutConfig cfg;
  cfg.row_cap = o.nums;
  cfg.max_interactions = o.max_interactions;
  cfg.max_total_tokens = o.max_tokens;
  cfg.temperature = o.temperature;
  cfg.base_seed = o.seed;
  return cfg;
}

std::string derive_schema(sqlexec::Database& db) {
  auto out = db.execute_full(
      "SELECT sql FROM sqlite_master WHERE type = 'table' AND sql IS NOT "
      "NULL ORDER BY rowid");
  std::string schema;
  if (out.status != sqlexec::ExecStatus::Ok) return schema;
  for (const auto& row : out.rows) {
    if (row.empty()) continue;
    if (!schema.empty()) schema += "\n";
    schema += row[0] + ";";
  }
  return schema;
}

dataset::DatasetExample make_example(const ExampleOpts& o) {
  dataset::DatasetExample ex;
  ex.question_id = o.id;
  ex.question = o.question;
  ex.evidence = o.evidence;
  ex.db_path = o.db_path;
  ex.gold_sql = o.gold_sql;
  ex.schema_prompt = o.schema;
  if (ex.schema_prompt.empty()) {
    sqlexec::Database db(ex.db_path);
    ex.schema_prompt = derive_schema(db);
  }
  return ex;
}

std::unique_ptr<model_client::ModelBackend> make_backend(
    const BackendOpts& o, const std::vector<dataset::DatasetExample>& examples) {
  if (o.echo_gold) {
    for (const auto& ex : examples) {
      if (ex.gold_sql.empty())
        throw Error("--echo-gold needs gold SQL for every example (" +
                    ex.question_id + " has none)");
    }
    return std::make_unique<eval::GoldEchoBackend>(examples);
  }
  if (!o.endpoint.empty()) {
    model_client::HttpClientConfig cfg;
    cfg.base_url = o.endpoint;
    cfg.model = o.model;
    return std::make_unique<model_client::HttpModelClient>(cfg);
  }
  throw Error("no backend selected: pass --endpoint URL or --echo-gold");
}

rewards::RewardWeights resolve_weights(const std::string& name,
                                       const std::string& weights_file) {
  if (!weights_file.empty()) return rewards::load_weights_file(weights_file, name);
  auto w = rewards::RewardWeights::by_name(name);
  if (!w) throw Error("unknown weight preset: " + name);
  return *w;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_breakdown_table(const rewards::RewardBreakdown& b,
                           const rewards::RewardWeights& w) {
  std::printf("%-12s %8s %8s %10s\n", "component", "value", "weight", "term");
  std::printf("%-12s %8d %8.2f %10.3f\n", "format", b.r_format, w.format,
              w.format * b.r_format);
  std::printf("%-12s %8d %8.2f %10.3f\n", "exact_match", b.r_em, w.em,
              w.em * b.r_em);
  std::printf("%-12s %8d %8.2f %10.3f\n", "execution", b.r_exec, w.exec,
              w.exec * b.r_exec);
  std::printf("%-12s %8.3f %8.2f %10.3f\n", "entity", b.r_entity, w.entity,
              w.entity * b.r_entity);
  std::printf("%-12s %8.3f %8.2f %10.3f\n", "exploration", b.r_expl, w.expl,
              w.expl * b.r_expl);
  std::printf("%-12s %8s %8s %10.3f\n", "total", "", "", b.total);
}

void print_rollout_summary(const rollout::RolloutOutcome& outcome) {
  std::printf("--- trace ---\n%s\n--- summary ---\n", outcome.text.c_str());
  std::printf("termination:  %s\n",
              std::string(rollout::termination_name(outcome.termination)).c_str());
  std::printf("interactions: %d\n", outcome.interactions_used);
  std::printf("tokens:       %d\n", outcome.total_tokens);
  std::printf("final sql:    %s\n",
              outcome.final_sql ? outcome.final_sql->c_str() : "(none)");
}

int cmd_rollout(const ExampleOpts& eo, const BackendOpts& bo,
                const BudgetOpts& budget, const std::string& weights_name) {
  auto example = make_example(eo);
  auto backend = make_backend(bo, {example});
  sqlexec::Database db(example.db_path);
  const auto cfg = make_rollout_config(budget);
  auto outcome = rollout::run_rollout(example, db, *backend, cfg, budget.seed);

  rewards::RewardBreakdown reward;
  if (!example.gold_sql.empty())
    reward = rewards::score_rollout(outcome.trace, example.gold_sql, db,
                                    resolve_weights(weights_name, ""));
  auto record = records::make_record(example.question_id, outcome, reward);
  std::printf("%s\n", records::to_json_line(record).c_str());
  print_rollout_summary(outcome);
  if (example.gold_sql.empty()) std::printf("reward:       (unscored: no --gold-sql)\n");
  else std::printf("reward total: %.3f\n", reward.total);
  return outcome.termination == rollout::Termination::FinalSqlEmitted ? 0 : 1;
}

int cmd_score(const std::string& trace_path, const std::string& gold_sql,
              const std::string& gold_file, const std::string& db_path,
              const std::string& weights_name, const std::string& weights_file) {
  std::string gold = gold_sql;
  if (gold.empty() && !gold_file.empty()) gold = read_file(gold_file);
  if (gold.empty()) throw Error("pass --gold-sql or --gold-file");

  const auto weights = resolve_weights(weights_name, weights_file);
  const auto trace = markup::parse_trace(read_file(trace_path));
  if (!markup::validate_format(trace))
    throw Error("trace file " + trace_path +
                " does not conform to the markup template");
  sqlexec::Database db(db_path);
  const auto b = rewards::score_rollout(trace, gold, db, weights);

  nlohmann::json line{{"type", "score"},        {"format", b.r_format},
                      {"exact_match", b.r_em},  {"execution", b.r_exec},
                      {"entity", b.r_entity},   {"exploration", b.r_expl},
                      {"total", b.total}};
  std::printf("%s\n", line.dump().c_str());
  print_breakdown_table(b, weights);
  return 0;
}

int cmd_decode(const ExampleOpts& eo, const BackendOpts& bo,
               const BudgetOpts& budget, const std::string& strategy_name,
               int candidates, int branching) {
  auto example = make_example(eo);
  auto backend = make_backend(bo, {example});
  sqlexec::Database db(example.db_path);
  auto cfg = make_rollout_config(budget);

  const auto strategy = eval::strategy_by_name(strategy_name);
  if (!strategy) throw Error("unknown strategy: " + strategy_name);

  if (*strategy == eval::Strategy::Greedy) {
    auto outcome = rollout::run_rollout(example, db, *backend, cfg, budget.seed);
    auto record = records::make_record(example.question_id, outcome, {});
    std::printf("%s\n", records::to_json_line(record).c_str());
    print_rollout_summary(outcome);
    return outcome.termination == rollout::Termination::FinalSqlEmitted ? 0 : 1;
  }

  tree::DecodeResult result;
  try {
    if (*strategy == eval::Strategy::Tree) {
      tree::TreeBudget tb;
      tb.max_candidates = candidates;
      tb.branching = branching;
      result = tree::decode_tree(example, db, *backend, cfg, tb);
    } else {
      result = tree::decode_linear(example, db, *backend, cfg, candidates);
    }
  } catch (const NoCandidatesError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::printf("%s", tree::tree_dump_jsonl(result).c_str());
  std::printf("--- summary ---\n");
  std::printf("strategy:         %s\n", strategy_name.c_str());
  std::printf("candidates:       %zu\n", result.candidates.size());
  std::printf("generated tokens: %lld\n",
              static_cast<long long>(result.stats.total_generated_tokens));
  std::printf("selected:         #%d%s\n", result.selected.index,
              result.stats.all_candidates_errored
                  ? " (all candidates errored)"
                  : "");
  std::printf("sql:              %s\n", result.selected.final_sql.c_str());
  return result.stats.all_candidates_errored ? 1 : 0;
}

int cmd_eval(const std::string& dataset_path, const BackendOpts& bo,
             const BudgetOpts& budget, const std::string& strategy_name,
             int candidates, int branching, int workers,
             const std::string& metrics_csv, const std::string& weights_name,
             const std::string& weights_file, bool skip_gold_check,
             bool include_timings) {
  eval::EvalConfig cfg;
  cfg.rollout = make_rollout_config(budget);
  cfg.candidates = candidates;
  cfg.branching = branching;
  cfg.workers = workers;

  const auto strategy = eval::strategy_by_name(strategy_name);
  if (!strategy) throw Error("unknown strategy: " + strategy_name);
  cfg.strategy = *strategy;

  bool want_ves = false;
  std::stringstream metrics(metrics_csv);
  std::string metric;
  while (std::getline(metrics, metric, ',')) {
    if (metric == "ex") continue;
    if (metric == "ves") { want_ves = true; continue; }
    throw Error("unknown metric: " + metric + " (expected ex and/or ves)");
  }
  cfg.compute_ves = want_ves;
  cfg.include_timings = include_timings;

  // Validated up front so a typo fails before the sweep; EX/VES themselves
  // are reward-free, the preset only labels the run.
  const auto weights = resolve_weights(weights_name, weights_file);
  (void)weights;

  dataset::LoadOptions load;
  load.skip_gold_check = skip_gold_check;
  auto examples = dataset::load_dataset(dataset_path, load);
  auto backend = make_backend(bo, examples);

  auto report = eval::evaluate(examples, *backend, cfg);
  const bool show_timings = include_timings && want_ves;
  std::printf("%s", eval::report_jsonl(report, show_timings).c_str());
  std::printf("weights: %s\n", weights_name.c_str());
  std::printf("%s", eval::render_summary(report, show_timings).c_str());
  return eval::report_exit_code(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive SQL-generation rollouts, rewards, decoding, and "
               "EX/VES evaluation"};
  app.require_subcommand(1);

  ExampleOpts ro_example;
  BackendOpts ro_backend;
  BudgetOpts ro_budget;
  std::string ro_weights = "base";
  auto* ro = app.add_subcommand("rollout",
                                "Run one interactive rollout and print its "
                                "trace");
  add_example_opts(ro, ro_example);
  add_backend_opts(ro, ro_backend);
  add_budget_opts(ro, ro_budget);
  ro->add_option("--weights", ro_weights, "Reward preset for scoring");

  std::string sc_trace, sc_gold, sc_gold_file, sc_db, sc_weights = "base",
                                                      sc_weights_file;
  auto* sc = app.add_subcommand("score",
                                "Score a stored trace against gold SQL");
  sc->add_option("--trace", sc_trace, "File holding the raw trace text")
      ->required()
      ->check(CLI::ExistingFile);
  sc->add_option("--gold-sql", sc_gold, "Reference SQL");
  sc->add_option("--gold-file", sc_gold_file, "File holding the reference SQL")
      ->check(CLI::ExistingFile);
  sc->add_option("--db", sc_db, "SQLite database file")
      ->required()
      ->check(CLI::ExistingFile);
  sc->add_option("--weights", sc_weights, "Weight preset name");
  sc->add_option("--weights-file", sc_weights_file,
                 "JSON file with custom presets")
      ->check(CLI::ExistingFile);

  ExampleOpts de_example;
  BackendOpts de_backend;
  BudgetOpts de_budget;
  std::string de_strategy = "tree";
  int de_candidates = 16;
  int de_branching = 3;
  auto* de = app.add_subcommand("decode",
                                "Decode one example with a search strategy");
  add_example_opts(de, de_example);
  add_backend_opts(de, de_backend);
  add_budget_opts(de, de_budget);
  de->add_option("--strategy", de_strategy, "greedy | linear | tree");
  de->add_option("--candidates", de_candidates, "Candidate pool size")
      ->check(CLI::PositiveNumber);
  de->add_option("--branching", de_branching, "Children per node (tree)")
      ->check(CLI::PositiveNumber);

  std::string ev_dataset, ev_strategy = "greedy", ev_metrics = "ex,ves",
                          ev_weights = "base", ev_weights_file;
  BackendOpts ev_backend;
  BudgetOpts ev_budget;
  int ev_candidates = 16;
  int ev_branching = 3;
  int ev_workers = 0;
  bool ev_skip_gold = false;
  bool ev_timings = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a dataset and report EX/VES");
  ev->add_option("--dataset", ev_dataset, "Line-delimited example file")
      ->required()
      ->check(CLI::ExistingFile);
  add_backend_opts(ev, ev_backend);
  add_budget_opts(ev, ev_budget);
  ev->add_option("--strategy", ev_strategy, "greedy | linear | tree");
  ev->add_option("--candidates", ev_candidates, "Candidate pool size")
      ->check(CLI::PositiveNumber);
  ev->add_option("--branching", ev_branching, "Children per node (tree)")
      ->check(CLI::PositiveNumber);
  ev->add_option("--workers", ev_workers, "Concurrent examples (0 = auto)");
  ev->add_option("--metrics", ev_metrics, "Comma list drawn from ex,ves");
  ev->add_option("--weights", ev_weights, "Weight preset name");
  ev->add_option("--weights-file", ev_weights_file,
                 "JSON file with custom presets")
      ->check(CLI::ExistingFile);
  ev->add_flag("--skip-gold-check", ev_skip_gold,
               "Skip the gold-SQL dry run during loading");
  ev->add_flag("--include-timings", ev_timings,
               "Emit per-example timing fields (non-deterministic bytes)");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(ro))
      return cmd_rollout(ro_example, ro_backend, ro_budget, ro_weights);
    if (app.got_subcommand(sc))
      return cmd_score(sc_trace, sc_gold, sc_gold_file, sc_db, sc_weights,
                       sc_weights_file);
    if (app.got_subcommand(de))
      return cmd_decode(de_example, de_backend, de_budget, de_strategy,
                        de_candidates, de_branching);
    if (app.got_subcommand(ev))
      return cmd_eval(ev_dataset, ev_backend, ev_budget, ev_strategy,
                      ev_candidates, ev_branching, ev_workers, ev_metrics,
                      ev_weights, ev_weights_file, ev_skip_gold, ev_timings);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
