// Brute-force reward scorer used as the ground-truth oracle for the rewards
// module. Everything here is coded independently of src/: its own SQL
// normalizer, its own sqlite3 execution + comparison, hand-resolved entity
// sets for a fixed statement corpus, and a direct transcription of the
// component formulas. The synthetic rollout generator carries ground-truth
// flags (format validity, interaction count, which corpus statements were
// used) so the oracle never calls into the library.
#pragma once

#include <sqlite3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reward_oracle {

struct Weights {
  double format, em, exec, entity, expl;
};

struct Breakdown {
  int r_format = 0;
  int r_em = 0;
  int r_exec = 0;
  double r_entity = 0.0;
  double r_expl = 0.0;
  double total = 0.0;
};

// --- statement corpus with hand-resolved entity sets -----------------------

struct CorpusEntry {
  std::string sql;
  std::set<std::string> tables;
  std::set<std::string> columns;
  bool executes_ok;  // against the fixture schema below
};

// Fixture schema these entries were resolved against:
//   CREATE TABLE t(a INTEGER, b TEXT);  -- rows (1,'x'),(2,'y'),(3,'z')
//   CREATE TABLE u(k INTEGER);          -- rows (5),(6)
inline const char* kFixtureScript =
    "CREATE TABLE t(a INTEGER, b TEXT);"
    "INSERT INTO t VALUES (1,'x'),(2,'y'),(3,'z');"
    "CREATE TABLE u(k INTEGER);"
    "INSERT INTO u VALUES (5),(6);";

inline const std::vector<CorpusEntry>& corpus() {
  static const std::vector<CorpusEntry> entries = {
      {"SELECT a FROM t ORDER BY a", {"t"}, {"t.a"}, true},
      {"SELECT a, b FROM t", {"t"}, {"t.a", "t.b"}, true},
      {"SELECT COUNT(*) FROM t", {"t"}, {}, true},
      {"SELECT 1", {}, {}, true},  // empty gold entity set branch
      {"SELECT t.a FROM t ORDER BY t.a", {"t"}, {"t.a"}, true},
      {"SELECT a FROM t WHERE a > 1", {"t"}, {"t.a"}, true},
      {"SELECT a FROM t WHERE a > 99", {"t"}, {"t.a"}, true},  // zero rows
      {"SELECT k FROM u", {"u"}, {"u.k"}, true},
      {"SELECT 2", {}, {}, true},
      {"SELEC a FROM t", {}, {}, false},    // syntax error
      {"DELETE FROM t", {}, {}, false},     // not a query
  };
  return entries;
}

// --- independent component implementations ----------------------------------

inline std::string normalize(const std::string& s) {
  std::istringstream iss(s);
  std::string tok, out;
  while (iss >> tok) {
    if (!out.empty()) out += ' ';
    out += tok;
  }
  while (!out.empty() && (out.back() == ';' || out.back() == ' ')) out.pop_back();
  return out;
}

inline int em_reward(const std::string& pred, const std::string& gold) {
  return normalize(pred) == normalize(gold) ? 1 : 0;
}

inline bool has_order_by(const std::string& sql) {
  std::string n = normalize(sql);
  for (char& c : n) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return n.find(" ORDER BY ") != std::string::npos;
}

// Runs one statement read-only and materializes every row as text cells.
// Returns false on any engine error.
inline bool run_sql(const std::string& db_path, const std::string& sql,
                    std::vector<std::vector<std::string>>& rows_out) {
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(db_path.c_str(), &db, SQLITE_OPEN_READONLY, nullptr) != SQLITE_OK) {
    sqlite3_close(db);
    throw std::runtime_error("oracle: cannot open " + db_path);
  }
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db, sql.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
    sqlite3_finalize(stmt);
    sqlite3_close(db);
    return false;
  }
  rows_out.clear();
  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    std::vector<std::string> row;
    const int ncol = sqlite3_column_count(stmt);
    for (int i = 0; i < ncol; ++i) {
      switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_NULL:
          row.emplace_back("NULL");
          break;
        case SQLITE_INTEGER:
          row.emplace_back(std::to_string(sqlite3_column_int64(stmt, i)));
          break;
        default: {
          const unsigned char* txt = sqlite3_column_text(stmt, i);
          row.emplace_back(txt ? reinterpret_cast<const char*>(txt) : "");
          break;
        }
      }
    }
    rows_out.push_back(std::move(row));
  }
  const bool ok = (rc == SQLITE_DONE);
  sqlite3_finalize(stmt);
  sqlite3_close(db);
  return ok;
}

// 0 if pred errors; else 1 + [results match]. Ordered comparison only when
// pred carries a top-level ORDER BY; otherwise both row lists are sorted.
inline int exec_reward(const std::string& db_path, const std::string& pred,
                       const std::string& gold) {
  std::vector<std::vector<std::string>> p, g;
  if (!run_sql(db_path, pred, p)) return 0;
  if (!run_sql(db_path, gold, g)) return 1;
  if (!has_order_by(pred)) {
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
  }
  return p == g ? 2 : 1;
}

inline double entity_reward(const std::set<std::string>& pred_tables,
                            const std::set<std::string>& pred_columns,
                            const std::set<std::string>& gold_tables,
                            const std::set<std::string>& gold_columns) {
  const std::size_t gold_total = gold_tables.size() + gold_columns.size();
  if (gold_total == 0) return 1.0;
  std::size_t hit = 0;
  for (const auto& t : pred_tables) hit += gold_tables.count(t);
  for (const auto& c : pred_columns) hit += gold_columns.count(c);
  return static_cast<double>(hit) / static_cast<double>(gold_total);
}

inline double expl_reward(const std::vector<std::string>& exploratory, int n,
                          bool exec_is_max) {
  std::set<std::string> uniq;
  for (const auto& s : exploratory) uniq.insert(normalize(s));
  if (uniq.size() != exploratory.size()) return 0.0;
  if (exec_is_max) return 1.0;
  const double z = (static_cast<double>(n) - 2.0) / 1.0;
  return 1.0 / (1.0 + std::exp(-z));
}

// --- synthetic rollout generator --------------------------------------------

struct SyntheticRollout {
  std::string trace_text;
  bool format_ok = false;
  int interaction_count = 0;
  std::vector<std::string> exploratory_sqls;      // as embedded (pre-extraction)
  std::optional<std::size_t> final_entry;         // corpus index, absent = no final
  std::string final_rendered;                     // the exact statement embedded
  std::size_t gold_entry = 0;
};

inline const std::vector<std::string>& exploration_pool() {
  static const std::vector<std::string> pool = {
      "SELECT a FROM t LIMIT 1",
      "SELECT b FROM t",
      "SELECT k FROM u LIMIT 1",
      "SELECT COUNT(*) FROM u",
  };
  return pool;
}

inline SyntheticRollout make_rollout(std::mt19937& rng) {
  auto pick = [&rng](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  SyntheticRollout r;
  r.gold_entry = static_cast<std::size_t>(pick(0, 3));  // golds must execute

  // Exploratory statements, occasionally with a forced duplicate.
  const int n = pick(0, 4);
  const auto& pool = exploration_pool();
  for (int i = 0; i < n; ++i) r.exploratory_sqls.push_back(pool[pick(0, 3)]);
  if (n >= 1 && pick(0, 3) == 0) {
    std::string dup = r.exploratory_sqls[0];
    if (pick(0, 1) == 0) dup = "  " + dup + " ;";  // normalizes to the same text
    r.exploratory_sqls.push_back(dup);
  }
  r.interaction_count = static_cast<int>(r.exploratory_sqls.size());

  // Final statement: usually present, sometimes a whitespace/semicolon variant.
  std::size_t fin = static_cast<std::size_t>(pick(0, static_cast<int>(corpus().size()) - 1));
  r.final_entry = fin;
  r.final_rendered = corpus()[fin].sql;
  if (pick(0, 2) == 0) r.final_rendered = "  " + r.final_rendered + "\t;";

  // Mutation 0 keeps the trace valid; 1-4 each break the template differently.
  const int mutation = pick(0, 1) == 0 ? 0 : pick(1, 4);
  const bool fence_final = mutation != 4;
  if (mutation == 2) r.final_entry.reset();

  std::string text;
  auto gap = [&] { text += (pick(0, 1) == 0) ? "\n" : "\n\n"; };
  auto think = [&](const std::string& body) {
    text += "<think>" + body + "</think>";
    gap();
  };
  if (mutation == 3) {
    text += "<result>\nstray feedback\n</result>";
    gap();
  }
  for (std::size_t i = 0; i < r.exploratory_sqls.size(); ++i) {
    think("step " + std::to_string(i));
    text += "<intermediate_sql>\n```sql\n" + r.exploratory_sqls[i] +
            "\n```\n</intermediate_sql>";
    text += "<result>\n|a|\n|1|\n</result>";
    gap();
  }
  think("wrap up");
  if (mutation == 1) {
    text += "and then";
    gap();
  }
  if (r.final_entry.has_value()) {
    if (fence_final) {
      text += "<final_sql>\n```sql\n" + r.final_rendered + "\n```\n</final_sql>";
    } else {
      text += "<final_sql>\n" + r.final_rendered + "\n</final_sql>";
    }
  }
  r.trace_text = text;
  r.format_ok = (mutation == 0);
  return r;
}

// Direct transcription of the scoring pipeline over generator ground truth.
inline Breakdown score(const SyntheticRollout& r, const Weights& w,
                       const std::string& db_path) {
  Breakdown b;
  b.r_format = r.format_ok ? 1 : 0;

  const CorpusEntry& gold = corpus()[r.gold_entry];
  std::set<std::string> pred_tables, pred_columns;
  if (r.final_entry.has_value()) {
    const CorpusEntry& fin = corpus()[*r.final_entry];
    b.r_em = em_reward(r.final_rendered, gold.sql);
    b.r_exec = exec_reward(db_path, r.final_rendered, gold.sql);
    pred_tables = fin.tables;
    pred_columns = fin.columns;
  }
  b.r_entity = entity_reward(pred_tables, pred_columns, gold.tables, gold.columns);
  b.r_expl = expl_reward(r.exploratory_sqls, r.interaction_count, b.r_exec == 2);

  double total = w.format * b.r_format;
  total += w.em * b.r_em;
  total += w.exec * b.r_exec;
  total += w.entity * b.r_entity;
  total += w.expl * b.r_expl;
  b.total = total;
  return b;
}

}  // namespace reward_oracle
