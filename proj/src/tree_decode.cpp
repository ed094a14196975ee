#include "sqlrl/tree_decode.hpp"

#include <algorithm>
#include <map>
#include <utility>

#include <json.hpp>

#include "sqlrl/errors.hpp"
#include "sqlrl/markup.hpp"
#include "sqlrl/prompt.hpp"

namespace sqlrl::tree {

namespace {

enum class SampleKind { Candidate, NewChild, Merged, Dead };

struct Sampler {
  const dataset::DatasetExample& example;
  sqlexec::Database& db;
  model_client::ModelBackend& backend;
  const rollout::RolloutConfig& cfg;
  const TreeBudget& budget;
  std::string system_prompt;
  std::vector<TreeNode>& nodes;
  std::vector<Candidate>& candidates;
  DecodeStats& stats;
  std::uint64_t sample_counter = 0;

  // One generate/classify step from `node`, mirroring the rollout loop's
  // fragment handling so a path replay through run_rollout is byte-exact.
  SampleKind sample_once(int node_id) {
    TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
    model_client::GenerationRequest req;
    req.prompt = system_prompt + node.context;
    req.stop_sequences = {std::string(markup::kIntermediateSqlClose),
                          cfg.end_of_turn_marker};
    req.max_new_tokens = cfg.max_total_tokens - node.context_tokens;
    req.temperature = budget.temperature;
    req.seed = cfg.base_seed + sample_counter++;

    model_client::GenerationResult res;
    try {
      res = backend.generate(req);
    } catch (const Error&) {
      return SampleKind::Dead;
    }

    std::string fragment = res.text;
    int fragment_tokens = res.token_count;
    const bool stopped_on_eot =
        res.stop_kind == model_client::StopKind::StopSequence &&
        res.stop_sequence_index == 1;
    if (stopped_on_eot) {
      fragment.resize(fragment.size() - cfg.end_of_turn_marker.size());
      fragment_tokens = backend.count_tokens(fragment);
    }
    stats.total_generated_tokens += fragment_tokens;

    if (res.stop_kind == model_client::StopKind::LengthCap) {
      return SampleKind::Dead;  // path budget exhausted mid-fragment
    }

    const bool turn_over = stopped_on_eot ||
                           res.stop_kind == model_client::StopKind::EndOfTurn;
    if (!turn_over) {
      auto block = rollout::find_intermediate_block(fragment);
      if (block.found) {
        return grow_child(node_id, fragment, fragment_tokens, block.body);
      }
      // Stray close tag: the turn is over, fall through to final handling.
    }
    return finish_turn(node_id, fragment, fragment_tokens);
  }

  SampleKind grow_child(int node_id, const std::string& fragment,
                        int fragment_tokens, const std::string& body) {
    TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
    for (int child_id : node.children) {
      if (nodes[static_cast<std::size_t>(child_id)].fragment == fragment) {
        return SampleKind::Merged;  // identical sibling continuation
      }
    }
    if (static_cast<int>(node.children.size()) >= budget.branching) {
      return SampleKind::Dead;  // unreachable while budget also retires nodes
    }

    TreeNode child;
    child.node_id = static_cast<int>(nodes.size());
    child.parent = node_id;
    child.fragment = fragment;
    child.model_tokens = fragment_tokens;
    child.depth = node.depth + 1;

    std::string feedback;
    try {
      const std::string sql = markup::extract_sql(body);
      child.exploratory_sql = sql;
      feedback = sqlexec::render_feedback(
          db.execute(sql, cfg.row_cap, cfg.per_query_timeout));
    } catch (const EmptySqlError&) {
      feedback = std::string(rollout::kMalformedSqlNotice);
    }
    child.feedback = feedback;
    const std::string result_block =
        std::string(markup::kResultOpen) + "\n" + feedback + "\n" +
        std::string(markup::kResultClose);
    child.context = node.context + fragment + result_block;
    child.context_tokens = node.context_tokens + fragment_tokens +
                           backend.count_tokens(result_block);
    node.children.push_back(child.node_id);
    nodes.push_back(std::move(child));
    return SampleKind::NewChild;
  }

  SampleKind finish_turn(int node_id, const std::string& fragment,
                         int fragment_tokens) {
    const TreeNode& node = nodes[static_cast<std::size_t>(node_id)];
    const std::string full = node.context + fragment;
    auto trace = markup::parse_trace(full);
    if (!trace.final_sql.has_value()) return SampleKind::Dead;

    Candidate c;
    c.final_sql = *trace.final_sql;
    c.text = full;
    c.index = static_cast<int>(candidates.size());
    c.generated_tokens = fragment_tokens;
    for (std::optional<int> id = node_id; id.has_value();
         id = nodes[static_cast<std::size_t>(*id)].parent) {
      c.path.insert(c.path.begin(), *id);
      c.generated_tokens += nodes[static_cast<std::size_t>(*id)].model_tokens;
    }
    auto outcome = db.execute_full(c.final_sql, cfg.per_query_timeout);
    c.signature = sqlexec::ResultSignature::of(outcome);
    c.exec_elapsed = outcome.elapsed;
    candidates.push_back(std::move(c));
    return SampleKind::Candidate;
  }
};

std::chrono::nanoseconds group_median(std::vector<std::chrono::nanoseconds> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];  // lower median: no averaging, deterministic
}

Candidate candidate_from_rollout(const rollout::RolloutOutcome& outcome,
                                 sqlexec::Database& db,
                                 const rollout::RolloutConfig& cfg, int index) {
  Candidate c;
  c.final_sql = *outcome.final_sql;
  c.text = outcome.text;
  c.index = index;
  for (const auto& span : outcome.token_spans) {
    if (span.origin == markup::Origin::Model) {
      c.generated_tokens += static_cast<int>(span.end - span.begin);
    }
  }
  auto exec = db.execute_full(c.final_sql, cfg.per_query_timeout);
  c.signature = sqlexec::ResultSignature::of(exec);
  c.exec_elapsed = exec.elapsed;
  return c;
}

void finalize(DecodeResult& result) {
  auto sel = self_consistency_select(result.candidates);
  result.selected = result.candidates[sel.index];
  result.stats.all_candidates_errored = sel.all_errors_fallback;
  result.stats.candidate_count = static_cast<int>(result.candidates.size());
  result.stats.node_count = static_cast<int>(result.nodes.size());
}

}  // namespace

DecodeResult decode_tree(const dataset::DatasetExample& example,
                         sqlexec::Database& db,
                         model_client::ModelBackend& backend,
                         const rollout::RolloutConfig& cfg,
                         const TreeBudget& budget) {
  if (budget.max_candidates < 1 || budget.branching < 1) {
    throw Error("tree budget requires max_candidates >= 1 and branching >= 1");
  }
  DecodeResult result;
  Sampler sampler{example,
                  db,
                  backend,
                  cfg,
                  budget,
                  prompt::assemble(prompt::Style::ExecutionAware,
                                   example.schema_prompt,
                                   example.matched_contents, example.question,
                                   example.evidence),
                  result.nodes,
                  result.candidates,
                  result.stats};

  result.nodes.push_back(TreeNode{});  // root: empty context, depth 0
  std::vector<int> frontier = {0};
  const auto want_more = [&] {
    return static_cast<int>(result.candidates.size()) < budget.max_candidates;
  };

  while (!frontier.empty() && want_more()) {
    // A node leaves the active set after B non-candidate samples; candidates
    // are free so a final-emitting node can fill the whole K budget.
    std::vector<int> active;
    std::vector<int> samples_used;
    for (int id : frontier) {
      const TreeNode& node = result.nodes[static_cast<std::size_t>(id)];
      if (node.depth >= cfg.max_interactions) continue;  // per-path cap
      if (node.context_tokens >= cfg.max_total_tokens) continue;
      active.push_back(id);
      samples_used.push_back(0);
    }
    std::vector<int> next_frontier;
    while (!active.empty() && want_more()) {
      for (std::size_t i = 0; i < active.size() && want_more();) {
        const SampleKind kind = sampler.sample_once(active[i]);
        if (kind == SampleKind::Candidate) {
          ++i;
          continue;
        }
        if (kind == SampleKind::NewChild) {
          next_frontier.push_back(result.nodes.back().node_id);
        }
        if (++samples_used[i] >= budget.branching) {
          active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
          samples_used.erase(samples_used.begin() +
                             static_cast<std::ptrdiff_t>(i));
        } else {
          ++i;
        }
      }
    }
    // Level-size guard: never carry more nodes than candidates still wanted.
    if (static_cast<int>(next_frontier.size()) > budget.max_candidates) {
      next_frontier.resize(static_cast<std::size_t>(budget.max_candidates));
    }
    frontier = std::move(next_frontier);
  }

  if (result.candidates.empty()) {
    throw NoCandidatesError("no decoding path emitted a final SQL");
  }
  finalize(result);
  return result;
}

DecodeResult decode_linear(const dataset::DatasetExample& example,
                           sqlexec::Database& db,
                           model_client::ModelBackend& backend,
                           const rollout::RolloutConfig& cfg, int k,
                           int max_workers) {
  if (k < 1) {
    throw Error("linear decoding requires k >= 1");
  }
  rollout::RolloutConfig run_cfg = cfg;
  run_cfg.temperature = k == 1 ? 0.0 : TreeBudget{}.temperature;

  DecodeResult result;
  auto outcomes = rollout::run_group(example, backend, run_cfg, k, max_workers);
  for (const auto& outcome : outcomes) {
    for (const auto& span : outcome.token_spans) {
      if (span.origin == markup::Origin::Model) {
        result.stats.total_generated_tokens +=
            static_cast<long long>(span.end - span.begin);
      }
    }
    if (outcome.final_sql.has_value()) {
      result.candidates.push_back(candidate_from_rollout(
          outcome, db, run_cfg, static_cast<int>(result.candidates.size())));
    }
  }
  if (result.candidates.empty()) {
    throw NoCandidatesError("no rollout emitted a final SQL");
  }
  finalize(result);
  return result;
}

Selection self_consistency_select(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) {
    throw EmptyGroupError("selection over zero candidates");
  }
  std::map<sqlexec::ResultSignature, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    groups[candidates[i].signature].push_back(i);
  }

  Selection sel;
  bool have_value_group = false;
  std::size_t best_size = 0;
  std::chrono::nanoseconds best_median{0};
  std::size_t best_index = 0;
  for (const auto& [signature, members] : groups) {
    if (signature.kind != sqlexec::ResultSignature::Kind::Value) continue;
    std::vector<std::chrono::nanoseconds> times;
    times.reserve(members.size());
    for (std::size_t m : members) times.push_back(candidates[m].exec_elapsed);
    const auto median = group_median(times);
    const std::size_t lowest = members.front();  // members are ascending
    const bool wins =
        !have_value_group || members.size() > best_size ||
        (members.size() == best_size &&
         (median < best_median || (median == best_median && lowest < best_index)));
    if (wins) {
      have_value_group = true;
      best_size = members.size();
      best_median = median;
      best_index = lowest;
    }
  }
  if (!have_value_group) {
    sel.index = 0;
    sel.all_errors_fallback = true;
    return sel;
  }
  sel.index = best_index;
  return sel;
}

std::string tree_dump_jsonl(const DecodeResult& result) {
  std::string out;
  for (const auto& node : result.nodes) {
    nlohmann::json j{
        {"type", "node"},
        {"id", node.node_id},
        {"depth", node.depth},
        {"children", node.children},
        {"context_tokens", node.context_tokens},
        {"model_tokens", node.model_tokens},
        {"fragment", node.fragment},
    };
    j["parent"] = node.parent.has_value() ? nlohmann::json(*node.parent)
                                          : nlohmann::json(nullptr);
    j["exploratory_sql"] = node.exploratory_sql.has_value()
                               ? nlohmann::json(*node.exploratory_sql)
                               : nlohmann::json(nullptr);
    j["feedback"] = node.feedback.has_value() ? nlohmann::json(*node.feedback)
                                              : nlohmann::json(nullptr);
    out += j.dump();
    out += '\n';
  }
  for (const auto& c : result.candidates) {
    nlohmann::json j{
        {"type", "candidate"},
        {"index", c.index},
        {"final_sql", c.final_sql},
        {"signature_kind",
         c.signature.kind == sqlexec::ResultSignature::Kind::Value ? "value"
                                                                   : "error"},
        {"signature_digest", c.signature.digest},
        {"path", c.path},
        {"generated_tokens", c.generated_tokens},
        {"exec_elapsed_ns", c.exec_elapsed.count()},
        {"selected", c.index == result.selected.index},
    };
    out += j.dump();
    out += '\n';
  }
  nlohmann::json stats{
      {"type", "stats"},
      {"total_generated_tokens", result.stats.total_generated_tokens},
      {"node_count", result.stats.node_count},
      {"candidate_count", result.stats.candidate_count},
      {"all_candidates_errored", result.stats.all_candidates_errored},
  };
  out += stats.dump();
  out += '\n';
  return out;
}

}  // namespace sqlrl::tree
