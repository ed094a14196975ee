#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sqlrl/markup.hpp"
#include "sqlrl/sqlexec.hpp"

namespace sqlrl::rewards {

// Weighted composite over the five reward components. Presets mirror the
// tuned configurations shipped with the trainer; max_tune is the production
// default.
struct RewardWeights {
  double format = 1.0;
  double em = 1.0;
  double exec = 1.0;
  double entity = 1.0;
  double expl = 1.0;

  static RewardWeights base();              // 1.5 0.8 1.5 0.8 0.5
  static RewardWeights high_exploration();  // 1.5 0.8 1.5 0.8 2.0
  static RewardWeights high_format_ex();    // 2.0 0.8 3.0 0.8 0.5
  static RewardWeights uniform();           // 1.0 1.0 1.0 1.0 1.0
  static RewardWeights max_tune();          // 2.0 1.0 3.0 1.0 2.0

  // Case- and punctuation-insensitive preset lookup ("HighFormat-EX",
  // "high_format_ex", "maxtune" all resolve). Unknown names -> nullopt.
  static std::optional<RewardWeights> by_name(std::string_view name);

  bool operator==(const RewardWeights&) const = default;
};

// Reads a JSON file mapping preset names to weight objects with keys
// format/em/exec/entity/expl and returns the entry for `name` (same
// normalization as by_name). Throws sqlrl::Error on IO/parse/lookup failure.
RewardWeights load_weights_file(const std::string& path, std::string_view name);

// Logistic curve for the exploration reward: sigma((n - midpoint) / scale).
struct SigmoidParams {
  double midpoint = 2.0;
  double scale = 1.0;
};

struct RewardBreakdown {
  int r_format = 0;      // {0,1}
  int r_em = 0;          // {0,1}
  int r_exec = 0;        // {0,1,2}
  double r_entity = 0.0; // [0,1]
  double r_expl = 0.0;   // [0,1]
  double total = 0.0;    // weighted sum of the five, in declaration order

  bool operator==(const RewardBreakdown&) const = default;
};

// Everything the exploration reward needs from a finished rollout.
struct ExplorationContext {
  std::vector<std::string> exploratory_sqls;  // in emission order
  int interaction_count = 0;                  // n
  bool exec_reward_is_max = false;            // r_exec == 2
};

// Whitespace runs collapse to single spaces, ends are trimmed, trailing
// semicolons are stripped. Case and quoting are preserved.
std::string normalize_sql(std::string_view sql);

// 1 iff the trace conforms to the markup template end to end.
int format_reward(const markup::Trace& trace);

// 1 iff the two statements are identical after normalize_sql. Case-sensitive.
int exact_match_reward(std::string_view final_sql, std::string_view gold_sql);

// 0 if final_sql errors, 1 if it runs but the results differ from gold,
// 2 if the results match. Both statements run unbounded (no row cap).
int execution_reward(sqlexec::Database& db, const std::string& final_sql,
                     const std::string& gold_sql,
                     std::chrono::milliseconds timeout = sqlexec::kDefaultTimeout);

// 0 on any duplicate exploratory SQL (after normalize_sql); 1 when the final
// execution already earned the maximum; otherwise the logistic of the
// interaction count.
double exploration_reward(const ExplorationContext& ctx,
                          const SigmoidParams& sigmoid = {});

// Assembles the breakdown and its weighted total. The total accumulates in
// component declaration order so it is bit-reproducible.
RewardBreakdown composite_reward(int r_format, int r_em, int r_exec,
                                 double r_entity, double r_expl,
                                 const RewardWeights& weights);

// Full pipeline on a parsed trace: format check, then (when a final statement
// exists) exact match, execution against gold, entity overlap, and the
// exploration reward over the intermediate SQL blocks. A missing final
// statement zeroes em/exec and scores entity overlap with an empty
// prediction.
RewardBreakdown score_rollout(const markup::Trace& trace,
                              const std::string& gold_sql,
                              sqlexec::Database& db,
                              const RewardWeights& weights,
                              const SigmoidParams& sigmoid = {},
                              std::chrono::milliseconds timeout = sqlexec::kDefaultTimeout);

}  // namespace sqlrl::rewards
