#include "sqlrl/records.hpp"

#include <json.hpp>

#include "sqlrl/errors.hpp"

namespace sqlrl::records {

namespace {

using nlohmann::json;

std::string_view kind_name(markup::SegmentKind kind) {
  switch (kind) {
    case markup::SegmentKind::Think: return "think";
    case markup::SegmentKind::IntermediateSql: return "intermediate_sql";
    case markup::SegmentKind::Result: return "result";
    case markup::SegmentKind::FinalSql: return "final_sql";
    case markup::SegmentKind::Untagged: return "untagged";
  }
  return "untagged";
}

markup::SegmentKind kind_from(const std::string& name) {
  for (auto kind :
       {markup::SegmentKind::Think, markup::SegmentKind::IntermediateSql,
        markup::SegmentKind::Result, markup::SegmentKind::FinalSql,
        markup::SegmentKind::Untagged}) {
    if (name == kind_name(kind)) return kind;
  }
  throw Error("rollout record: unknown segment kind: " + name);
}

std::string_view origin_name(markup::Origin origin) {
  return origin == markup::Origin::Environment ? "environment" : "model";
}

markup::Origin origin_from(const std::string& name) {
  if (name == "model") return markup::Origin::Model;
  if (name == "environment") return markup::Origin::Environment;
  throw Error("rollout record: unknown origin: " + name);
}

std::string valid_termination(const std::string& name) {
  for (auto t : {rollout::Termination::FinalSqlEmitted,
                 rollout::Termination::BudgetExhausted,
                 rollout::Termination::InteractionCapHit,
                 rollout::Termination::ClientError,
                 rollout::Termination::StoppedWithoutFinalSql}) {
    if (name == rollout::termination_name(t)) return name;
  }
  throw Error("rollout record: unknown termination: " + name);
}

json reward_to_json(const rewards::RewardBreakdown& r) {
  return json{{"format", r.r_format},   {"exact_match", r.r_em},
              {"execution", r.r_exec},  {"entity", r.r_entity},
              {"exploration", r.r_expl}, {"total", r.total}};
}

rewards::RewardBreakdown reward_from_json(const json& j) {
  rewards::RewardBreakdown r;
  r.r_format = j.at("format").get<int>();
  r.r_em = j.at("exact_match").get<int>();
  r.r_exec = j.at("execution").get<int>();
  r.r_entity = j.at("entity").get<double>();
  r.r_expl = j.at("exploration").get<double>();
  r.total = j.at("total").get<double>();
  return r;
}

json record_to_json(const RolloutRecord& record) {
  json segments = json::array();
  for (const auto& seg : record.trace.segments) {
    segments.push_back(json{{"kind", kind_name(seg.kind)},
                            {"origin", origin_name(seg.origin)},
                            {"begin", seg.begin},
                            {"end", seg.end}});
  }
  json spans = json::array();
  for (const auto& span : record.token_spans) {
    spans.push_back(json{{"begin", span.begin},
                         {"end", span.end},
                         {"origin", origin_name(span.origin)}});
  }
  json j{{"question_id", record.question_id},
         {"trace_text", record.trace_text},
         {"segments", segments},
         {"loss_mask", record.loss_mask},
         {"token_spans", spans},
         {"termination", record.termination},
         {"interactions_used", record.interactions_used},
         {"seed", record.seed},
         {"reward", reward_to_json(record.reward)}};
  j["final_sql"] = record.final_sql.has_value() ? json(*record.final_sql)
                                                : json(nullptr);
  return j;
}

RolloutRecord record_from_json(const json& j) {
  RolloutRecord record;
  record.question_id = j.at("question_id").get<std::string>();
  record.trace_text = j.at("trace_text").get<std::string>();
  if (!j.at("final_sql").is_null()) {
    record.final_sql = j.at("final_sql").get<std::string>();
  }
  record.loss_mask = j.at("loss_mask").get<std::vector<bool>>();
  for (const auto& s : j.at("token_spans")) {
    record.token_spans.push_back(
        {s.at("begin").get<std::size_t>(), s.at("end").get<std::size_t>(),
         origin_from(s.at("origin").get<std::string>())});
  }
  record.termination = valid_termination(j.at("termination").get<std::string>());
  record.interactions_used = j.at("interactions_used").get<int>();
  record.seed = j.at("seed").get<std::uint64_t>();
  record.reward = reward_from_json(j.at("reward"));

  // The segment table ships for the trainer's convenience but the trace text
  // is authoritative; any disagreement means the line was corrupted.
  record.trace = markup::parse_trace(record.trace_text);
  const auto& table = j.at("segments");
  if (table.size() != record.trace.segments.size()) {
    throw Error("rollout record: segment table does not match trace_text");
  }
  for (std::size_t i = 0; i < record.trace.segments.size(); ++i) {
    const auto& seg = record.trace.segments[i];
    const auto& row = table[i];
    if (kind_from(row.at("kind").get<std::string>()) != seg.kind ||
        origin_from(row.at("origin").get<std::string>()) != seg.origin ||
        row.at("begin").get<std::size_t>() != seg.begin ||
        row.at("end").get<std::size_t>() != seg.end) {
      throw Error("rollout record: segment table does not match trace_text");
    }
  }
  if (record.loss_mask !=
      rollout::build_loss_mask(record.trace, record.token_spans)) {
    throw Error("rollout record: loss_mask does not match token_spans");
  }
  return record;
}

json parse_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error("rollout record: line is not a JSON object");
  }
  return j;
}

}  // namespace

RolloutRecord make_record(const std::string& question_id,
                          const rollout::RolloutOutcome& outcome,
                          const rewards::RewardBreakdown& reward) {
  RolloutRecord record;
  record.question_id = question_id;
  record.trace_text = outcome.text;
  record.trace = outcome.trace;
  record.final_sql = outcome.final_sql;
  record.loss_mask = outcome.loss_mask;
  record.token_spans = outcome.token_spans;
  record.termination = std::string(rollout::termination_name(outcome.termination));
  record.interactions_used = outcome.interactions_used;
  record.seed = outcome.seed;
  record.reward = reward;
  return record;
}

std::string to_json_line(const RolloutRecord& record) {
  return record_to_json(record).dump();
}

std::string to_json_line(const GrpoRecord& record) {
  json j = record_to_json(record.base);
  j["logp_theta"] = record.logp_theta;
  j["logp_old"] = record.logp_old;
  j["logp_ref"] = record.logp_ref;
  return j.dump();
}

RolloutRecord parse_record(const std::string& line) {
  try {
    return record_from_json(parse_line(line));
  } catch (const json::exception& e) {
    throw Error(std::string("rollout record: ") + e.what());
  }
}

GrpoRecord parse_grpo_record(const std::string& line) {
  json j = parse_line(line);
  GrpoRecord record;
  try {
    record.base = record_from_json(j);
    record.logp_theta = j.at("logp_theta").get<std::vector<double>>();
    record.logp_old = j.at("logp_old").get<std::vector<double>>();
    record.logp_ref = j.at("logp_ref").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(std::string("rollout record: ") + e.what());
  }
  const std::size_t len = record.base.loss_mask.size();
  if (record.logp_theta.size() != len || record.logp_old.size() != len ||
      record.logp_ref.size() != len) {
    throw ShapeMismatchError(
        "log-prob arrays must align with the loss mask: mask has " +
        std::to_string(len) + " tokens");
  }
  return record;
}

GroupInputs to_surrogate_inputs(const std::vector<GrpoRecord>& group) {
  if (group.empty()) {
    throw EmptyGroupError("record group is empty");
  }
  GroupInputs out;
  for (const auto& record : group) {
    const std::size_t len = record.base.loss_mask.size();
    if (record.logp_theta.size() != len || record.logp_old.size() != len ||
        record.logp_ref.size() != len) {
      throw ShapeMismatchError("log-prob arrays must align with the loss mask");
    }
    out.inputs.logp_theta.push_back(record.logp_theta);
    out.inputs.logp_old.push_back(record.logp_old);
    out.inputs.logp_ref.push_back(record.logp_ref);
    out.inputs.loss_mask.push_back(record.base.loss_mask);
    out.rewards.push_back(record.base.reward.total);
  }
  return out;
}

std::string emit_group(const std::vector<GrpoRecord>& group,
                       const std::vector<double>& advantages) {
  if (group.size() != advantages.size()) {
    throw ShapeMismatchError("one advantage per record required");
  }
  std::string out;
  for (std::size_t i = 0; i < group.size(); ++i) {
    json j = json::parse(to_json_line(group[i]));
    j["advantage"] = advantages[i];
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace sqlrl::records
