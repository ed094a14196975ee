#pragma once

// Line-delimited serialization of rollout outcomes — the export consumed by
// external trainers — and the log-prob-augmented variant that feeds the
// objective math. Parsing validates internal consistency (segment table,
// span partition, array lengths), so a corrupted line fails loudly instead of
// silently skewing training.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqlrl/grpo_math.hpp"
#include "sqlrl/markup.hpp"
#include "sqlrl/rewards.hpp"
#include "sqlrl/rollout.hpp"

namespace sqlrl::records {

struct RolloutRecord {
  std::string question_id;
  std::string trace_text;
  markup::Trace trace;  // segment table; must equal parse_trace(trace_text)
  std::optional<std::string> final_sql;
  std::vector<bool> loss_mask;
  std::vector<rollout::TokenSpan> token_spans;
  std::string termination;  // stable identifier from termination_name
  int interactions_used = 0;
  std::uint64_t seed = 0;
  rewards::RewardBreakdown reward;

  bool operator==(const RolloutRecord&) const = default;
};

// The same record with per-token log-probs under the three policies, aligned
// index-for-index with loss_mask.
struct GrpoRecord {
  RolloutRecord base;
  std::vector<double> logp_theta;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;

  bool operator==(const GrpoRecord&) const = default;
};

RolloutRecord make_record(const std::string& question_id,
                          const rollout::RolloutOutcome& outcome,
                          const rewards::RewardBreakdown& reward);

std::string to_json_line(const RolloutRecord& record);
std::string to_json_line(const GrpoRecord& record);

// Throw Error on malformed JSON, missing fields, unknown enum names, or any
// internal inconsistency; ShapeMismatchError when the log-prob arrays do not
// match the mask length.
RolloutRecord parse_record(const std::string& line);
GrpoRecord parse_grpo_record(const std::string& line);

// A group of augmented records, unbundled for the objective: per-rollout
// log-prob arrays and masks plus the composite rewards for normalization.
struct GroupInputs {
  grpo::SurrogateInputs inputs;  // clip/beta/mode left at their defaults
  std::vector<double> rewards;
};
GroupInputs to_surrogate_inputs(const std::vector<GrpoRecord>& group);

// One line per record with its advantage attached under "advantage".
std::string emit_group(const std::vector<GrpoRecord>& group,
                       const std::vector<double>& advantages);

}  // namespace sqlrl::records
