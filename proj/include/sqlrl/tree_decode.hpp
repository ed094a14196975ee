#pragma once

// Tree-structured execution-guided decoding: branch the reasoning context at
// interaction points (where feedback arrives), share generated prefixes,
// collect up to a budget of final-SQL candidates, and pick the answer by
// execution-based self-consistency. decode_linear is the no-sharing baseline.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqlrl/dataset.hpp"
#include "sqlrl/model_client.hpp"
#include "sqlrl/rollout.hpp"
#include "sqlrl/sqlexec.hpp"

namespace sqlrl::tree {

struct TreeBudget {
  int max_candidates = 16;  // K: stop once this many finals are collected
  int branching = 3;        // B: non-candidate samples (and children) per node
  double temperature = 0.7;
};

struct TreeNode {
  int node_id = 0;
  std::optional<int> parent;
  // Trace text from the rollout's start up to and including this node's
  // appended feedback block; the root holds the empty string.
  std::string context;
  // Model text this node introduced (ends in </intermediate_sql>).
  std::string fragment;
  std::optional<std::string> exploratory_sql;  // absent when malformed
  std::optional<std::string> feedback;         // rendered block body
  int depth = 0;                               // interactions consumed
  std::vector<int> children;
  int context_tokens = 0;  // trace tokens along the path, feedback included
  int model_tokens = 0;    // tokens of `fragment` alone
};

struct Candidate {
  std::string final_sql;
  sqlexec::ResultSignature signature;
  std::vector<int> path;  // node ids root..parent of the emitting turn
  // Model tokens on this path (each shared node counted once per candidate;
  // the stats field below counts them once globally).
  int generated_tokens = 0;
  std::chrono::nanoseconds exec_elapsed{0};
  int index = 0;     // collection order; final tie-break key
  std::string text;  // full trace text including the final turn
};

struct DecodeStats {
  // Sum of every generate call's appended tokens: shared prefixes are
  // generated once, so they are counted once.
  long long total_generated_tokens = 0;
  int node_count = 0;
  int candidate_count = 0;
  bool all_candidates_errored = false;
};

struct Selection {
  std::size_t index = 0;
  bool all_errors_fallback = false;
};

struct DecodeResult {
  std::vector<TreeNode> nodes;  // empty for decode_linear
  std::vector<Candidate> candidates;
  Candidate selected;
  DecodeStats stats;
};

// Grows the decoding tree breadth-first, sampling nodes round-robin within a
// level. A sampled continuation that completes an intermediate block becomes
// a child (identical sibling fragments merge; each node retires after B
// non-candidate samples); one that ends the turn with a final block becomes a
// candidate and does not consume the node's budget. Stops at K candidates or
// an empty frontier. Throws NoCandidatesError when no path produced a final.
DecodeResult decode_tree(const dataset::DatasetExample& example,
                         sqlexec::Database& db,
                         model_client::ModelBackend& backend,
                         const rollout::RolloutConfig& cfg,
                         const TreeBudget& budget = {});

// K independent rollouts (no prefix sharing), same candidate extraction and
// selection rule. K == 1 runs at temperature 0, matching greedy run_rollout.
DecodeResult decode_linear(const dataset::DatasetExample& example,
                           sqlexec::Database& db,
                           model_client::ModelBackend& backend,
                           const rollout::RolloutConfig& cfg, int k,
                           int max_workers = 0);

// Groups candidates by result signature. Error signatures are never chosen
// while any Value group exists. Largest Value group wins; ties fall to the
// smaller lower-median execution time, then to the lowest candidate index.
// The returned index is the winning group's lowest-index member. With only
// Error candidates, index 0 is returned with the fallback flag set.
Selection self_consistency_select(const std::vector<Candidate>& candidates);

// One JSON object per line: nodes, then candidates, then a stats record.
std::string tree_dump_jsonl(const DecodeResult& result);

}  // namespace sqlrl::tree
