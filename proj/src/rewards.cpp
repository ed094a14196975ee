#include "sqlrl/rewards.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "sqlrl/errors.hpp"
#include "sqlrl/sql_entities.hpp"

namespace sqlrl::rewards {

namespace {

// Lowercase and drop everything that is not a letter or digit, so preset
// names survive hyphen/underscore/case variations.
std::string canon_name(std::string_view name) {
  std::string out;
  for (char ch : name) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

RewardWeights RewardWeights::base() { return {1.5, 0.8, 1.5, 0.8, 0.5}; }
RewardWeights RewardWeights::high_exploration() { return {1.5, 0.8, 1.5, 0.8, 2.0}; }
RewardWeights RewardWeights::high_format_ex() { return {2.0, 0.8, 3.0, 0.8, 0.5}; }
RewardWeights RewardWeights::uniform() { return {1.0, 1.0, 1.0, 1.0, 1.0}; }
RewardWeights RewardWeights::max_tune() { return {2.0, 1.0, 3.0, 1.0, 2.0}; }

std::optional<RewardWeights> RewardWeights::by_name(std::string_view name) {
  const std::string key = canon_name(name);
  if (key == "base") return base();
  if (key == "highexploration") return high_exploration();
  if (key == "highformatex") return high_format_ex();
  if (key == "uniform") return uniform();
  if (key == "maxtune") return max_tune();
  return std::nullopt;
}

RewardWeights load_weights_file(const std::string& path, std::string_view name) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open weights file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("weights file " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw Error("weights file " + path + " must be a JSON object");
  const std::string want = canon_name(name);
  for (const auto& [key, value] : doc.items()) {
    if (canon_name(key) != want) continue;
    if (!value.is_object()) throw Error("weights entry " + key + " must be an object");
    RewardWeights w;
    try {
      w.format = value.at("format").get<double>();
      w.em = value.at("em").get<double>();
      w.exec = value.at("exec").get<double>();
      w.entity = value.at("entity").get<double>();
      w.expl = value.at("expl").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("weights entry " + key + " is malformed: " + e.what());
    }
    if (!(std::isfinite(w.format) && std::isfinite(w.em) && std::isfinite(w.exec) &&
          std::isfinite(w.entity) && std::isfinite(w.expl)) ||
        w.format < 0 || w.em < 0 || w.exec < 0 || w.entity < 0 || w.expl < 0) {
      throw Error("weights entry " + key + " must be finite and nonnegative");
    }
    return w;
  }
  throw Error("weights file " + path + " has no entry named " + std::string(name));
}

std::string normalize_sql(std::string_view sql) {
  std::string out;
  out.reserve(sql.size());
  bool pending_space = false;
  for (char ch : sql) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(ch);
  }
  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return out;
}

int format_reward(const markup::Trace& trace) {
  return markup::validate_format(trace) ? 1 : 0;
}

int exact_match_reward(std::string_view final_sql, std::string_view gold_sql) {
  return normalize_sql(final_sql) == normalize_sql(gold_sql) ? 1 : 0;
}

int execution_reward(sqlexec::Database& db, const std::string& final_sql,
                     const std::string& gold_sql,
                     std::chrono::milliseconds timeout) {
  auto pred = db.execute_full(final_sql, timeout);
  if (pred.status != sqlexec::ExecStatus::Ok) return 0;
  auto gold = db.execute_full(gold_sql, timeout);
  if (gold.status != sqlexec::ExecStatus::Ok) return 1;
  return sqlexec::compare_results(pred, gold, final_sql) ? 2 : 1;
}

double exploration_reward(const ExplorationContext& ctx,
                          const SigmoidParams& sigmoid) {
  std::set<std::string> seen;
  for (const auto& sql : ctx.exploratory_sqls) {
    if (!seen.insert(normalize_sql(sql)).second) return 0.0;
  }
  if (ctx.exec_reward_is_max) return 1.0;
  const double z =
      (static_cast<double>(ctx.interaction_count) - sigmoid.midpoint) / sigmoid.scale;
  return 1.0 / (1.0 + std::exp(-z));
}

RewardBreakdown composite_reward(int r_format, int r_em, int r_exec,
                                 double r_entity, double r_expl,
                                 const RewardWeights& weights) {
  RewardBreakdown b;
  b.r_format = r_format;
  b.r_em = r_em;
  b.r_exec = r_exec;
  b.r_entity = r_entity;
  b.r_expl = r_expl;
  double total = weights.format * r_format;
  total += weights.em * r_em;
  total += weights.exec * r_exec;
  total += weights.entity * r_entity;
  total += weights.expl * r_expl;
  b.total = total;
  return b;
}

RewardBreakdown score_rollout(const markup::Trace& trace,
                              const std::string& gold_sql,
                              sqlexec::Database& db,
                              const RewardWeights& weights,
                              const SigmoidParams& sigmoid,
                              std::chrono::milliseconds timeout) {
  const int r_format = format_reward(trace);

  ExplorationContext ctx;
  ctx.interaction_count = trace.interaction_count;
  for (const auto& seg : trace.segments) {
    if (seg.kind != markup::SegmentKind::IntermediateSql) continue;
    try {
      ctx.exploratory_sqls.push_back(markup::extract_sql(seg.text));
    } catch (const EmptySqlError&) {
      ctx.exploratory_sqls.push_back(seg.text);
    }
  }

  int r_em = 0;
  int r_exec = 0;
  sql_entities::EntitySet pred_entities;
  if (trace.final_sql.has_value()) {
    r_em = exact_match_reward(*trace.final_sql, gold_sql);
    r_exec = execution_reward(db, *trace.final_sql, gold_sql, timeout);
    pred_entities = sql_entities::extract_entities(*trace.final_sql);
  }
  const double r_entity = sql_entities::entity_overlap(
      pred_entities, sql_entities::extract_entities(gold_sql));

  ctx.exec_reward_is_max = (r_exec == 2);
  const double r_expl = exploration_reward(ctx, sigmoid);

  return composite_reward(r_format, r_em, r_exec, r_entity, r_expl, weights);
}

}  // namespace sqlrl::rewards
