#include "sqlrl/sql_entities.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace sqlrl::sql_entities {

namespace {

// Internal only: any structural surprise aborts extraction and the public
// wrapper degrades to the empty set.
struct ParseFail : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TokKind { Ident, Number, String, Punct, Star };

struct Token {
  TokKind kind;
  std::string text;  // idents unquoted and lowercased; puncts the symbol
  bool quoted = false;
};

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const std::unordered_set<std::string>& keywords() {
  static const std::unordered_set<std::string> kw = {
      "select", "from", "where", "group", "by", "having", "order", "limit",
      "offset", "join", "inner", "left", "right", "full", "outer", "cross",
      "natural", "on", "using", "as", "and", "or", "not", "in", "exists",
      "between", "like", "glob", "regexp", "match", "escape", "is", "null",
      "isnull", "notnull", "distinct", "all", "union", "intersect", "except",
      "case", "when", "then", "else", "end", "cast", "collate", "asc", "desc",
      "with", "recursive", "values", "current_date", "current_time",
      "current_timestamp", "filter", "over", "partition", "window", "rows",
      "range", "unbounded", "preceding", "following", "current", "row",
      "indexed", "true", "false",
  };
  return kw;
}

bool is_keyword(const Token& t) {
  return t.kind == TokKind::Ident && !t.quoted && keywords().count(t.text) > 0;
}

bool is_kw(const Token& t, std::string_view word) {
  return t.kind == TokKind::Ident && !t.quoted && t.text == word;
}

bool is_punct(const Token& t, char c) {
  return t.kind == TokKind::Punct && t.text.size() == 1 && t.text[0] == c;
}

std::vector<Token> lex(std::string_view sql) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < sql.size()) {
    char c = sql[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (sql.compare(i, 2, "--") == 0) {
      std::size_t nl = sql.find('\n', i);
      i = nl == std::string_view::npos ? sql.size() : nl + 1;
      continue;
    }
    if (sql.compare(i, 2, "/*") == 0) {
      std::size_t end = sql.find("*/", i + 2);
      if (end == std::string_view::npos) throw ParseFail("unterminated comment");
      i = end + 2;
      continue;
    }
    if (c == '\'') {
      std::string text;
      ++i;
      while (true) {
        if (i >= sql.size()) throw ParseFail("unterminated string");
        if (sql[i] == '\'') {
          if (i + 1 < sql.size() && sql[i + 1] == '\'') {
            text += '\'';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        text += sql[i++];
      }
      out.push_back({TokKind::String, std::move(text)});
      continue;
    }
    if (c == '"' || c == '`') {
      char q = c;
      std::string text;
      ++i;
      while (true) {
        if (i >= sql.size()) throw ParseFail("unterminated quoted identifier");
        if (sql[i] == q) {
          if (i + 1 < sql.size() && sql[i + 1] == q) {
            text += q;
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        text += sql[i++];
      }
      out.push_back({TokKind::Ident, to_lower(text), true});
      continue;
    }
    if (c == '[') {
      std::size_t end = sql.find(']', i + 1);
      if (end == std::string_view::npos) throw ParseFail("unterminated bracket identifier");
      out.push_back({TokKind::Ident, to_lower(sql.substr(i + 1, end - i - 1)), true});
      i = end + 1;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])))) {
      std::size_t j = i;
      while (j < sql.size() &&
             (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '.' ||
              ((sql[j] == '+' || sql[j] == '-') && j > i &&
               (sql[j - 1] == 'e' || sql[j - 1] == 'E')))) {
        ++j;
      }
      out.push_back({TokKind::Number, std::string(sql.substr(i, j - i))});
      i = j;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < sql.size() && is_ident_char(sql[j])) ++j;
      out.push_back({TokKind::Ident, to_lower(sql.substr(i, j - i)), false});
      i = j;
      continue;
    }
    if (c == '?' || c == ':' || c == '@' || c == '$') {
      // Bind parameter: swallow the marker and any name so the name is not
      // mistaken for a column.
      std::size_t j = i + 1;
      while (j < sql.size() && is_ident_char(sql[j])) ++j;
      out.push_back({TokKind::Punct, "?"});
      i = j;
      continue;
    }
    if (c == '*') {
      out.push_back({TokKind::Star, "*"});
      ++i;
      continue;
    }
    out.push_back({TokKind::Punct, std::string(1, c)});
    ++i;
  }
  return out;
}

// Matching close paren for every open paren; throws on imbalance.
std::vector<std::size_t> match_parens(const std::vector<Token>& toks) {
  std::vector<std::size_t> match(toks.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (is_punct(toks[i], '(')) {
      stack.push_back(i);
    } else if (is_punct(toks[i], ')')) {
      if (stack.empty()) throw ParseFail("unbalanced parens");
      match[stack.back()] = i;
      stack.pop_back();
    }
  }
  if (!stack.empty()) throw ParseFail("unbalanced parens");
  return match;
}

struct Scope {
  const Scope* parent = nullptr;
  std::map<std::string, std::string> alias_to_table;  // includes table -> table
  std::unordered_set<std::string> derived;            // subquery/CTE aliases and names
  std::unordered_set<std::string> ctes;               // names visible to this scope
  std::vector<std::string> base_tables;               // FROM order, duplicates kept
  std::unordered_set<std::string> select_aliases;
  int derived_items = 0;

  bool cte_visible(const std::string& name) const {
    for (const Scope* s = this; s != nullptr; s = s->parent) {
      if (s->ctes.count(name) > 0) return true;
    }
    return false;
  }
};

enum class QualifierKind { BaseTable, Derived, Unknown };

struct Resolution {
  QualifierKind kind;
  std::string table;  // set for BaseTable
};

Resolution resolve_qualifier(const Scope* scope, const std::string& q) {
  for (const Scope* s = scope; s != nullptr; s = s->parent) {
    auto it = s->alias_to_table.find(q);
    if (it != s->alias_to_table.end()) return {QualifierKind::BaseTable, it->second};
    if (s->derived.count(q) > 0) return {QualifierKind::Derived, {}};
  }
  return {QualifierKind::Unknown, {}};
}

// Innermost scope that declares any FROM item decides bare-column
// qualification: a single base table and nothing derived is unambiguous.
const Scope* qualifying_scope(const Scope* scope) {
  for (const Scope* s = scope; s != nullptr; s = s->parent) {
    if (!s->base_tables.empty() || s->derived_items > 0) return s;
  }
  return nullptr;
}

class Extractor {
 public:
  Extractor(std::vector<Token> toks, EntitySet& out)
      : toks_(std::move(toks)), match_(match_parens(toks_)), out_(out) {}

  void run() {
    if (toks_.empty()) throw ParseFail("empty statement");
    // Trailing semicolons are statement syntax, not expression content.
    std::size_t hi = toks_.size();
    while (hi > 0 && is_punct(toks_[hi - 1], ';')) --hi;
    if (hi == 0) throw ParseFail("empty statement");
    parse_query(0, hi, nullptr);
  }

 private:
  std::vector<Token> toks_;
  std::vector<std::size_t> match_;
  EntitySet& out_;

  // [lo,hi): optional WITH prefix, then select cores joined by set operators.
  void parse_query(std::size_t lo, std::size_t hi, const Scope* parent) {
    if (lo >= hi) throw ParseFail("empty query");
    Scope with_scope;
    with_scope.parent = parent;

    std::size_t i = lo;
    if (is_kw(toks_[i], "with")) {
      ++i;
      if (i < hi && is_kw(toks_[i], "recursive")) ++i;
      while (true) {
        if (i >= hi || toks_[i].kind != TokKind::Ident) throw ParseFail("bad CTE name");
        std::string name = toks_[i].text;
        with_scope.ctes.insert(name);
        ++i;
        if (i < hi && is_punct(toks_[i], '(')) i = match_[i] + 1;  // column list
        if (i >= hi || !is_kw(toks_[i], "as")) throw ParseFail("CTE missing AS");
        ++i;
        if (i < hi && is_kw(toks_[i], "not")) ++i;          // [NOT] MATERIALIZED
        if (i < hi && is_kw(toks_[i], "materialized")) ++i;
        if (i >= hi || !is_punct(toks_[i], '(')) throw ParseFail("CTE missing body");
        std::size_t close = match_[i];
        parse_query(i + 1, close, &with_scope);
        i = close + 1;
        if (i < hi && is_punct(toks_[i], ',')) {
          ++i;
          continue;
        }
        break;
      }
    }

    // Split the remaining range on top-level set operators.
    std::size_t part_lo = i;
    std::size_t depth_guard = i;
    for (std::size_t j = i; j <= hi; ++j) {
      bool at_op = false;
      if (j < hi && is_punct(toks_[j], '(')) {
        j = match_[j];
        continue;
      }
      if (j == hi) {
        at_op = true;
      } else if (is_kw(toks_[j], "union") || is_kw(toks_[j], "intersect") ||
                 is_kw(toks_[j], "except")) {
        at_op = true;
      }
      if (at_op) {
        if (part_lo < j) parse_select_core(part_lo, j, &with_scope);
        if (j < hi) {
          part_lo = j + 1;
          if (part_lo < hi && is_kw(toks_[part_lo], "all")) ++part_lo;
        }
      }
    }
    (void)depth_guard;
  }

  // One SELECT ... [FROM ...] [WHERE ...] ... core.
  void parse_select_core(std::size_t lo, std::size_t hi, const Scope* parent) {
    if (lo >= hi) throw ParseFail("empty select core");
    // A parenthesized core: (SELECT ...) as a whole set-operand.
    if (is_punct(toks_[lo], '(') && match_[lo] == hi - 1) {
      parse_query(lo + 1, hi - 1, parent);
      return;
    }
    if (!is_kw(toks_[lo], "select")) throw ParseFail("expected SELECT");

    Scope scope;
    scope.parent = parent;

    auto is_clause_kw = [&](std::size_t j) {
      return is_kw(toks_[j], "where") || is_kw(toks_[j], "group") ||
             is_kw(toks_[j], "having") || is_kw(toks_[j], "order") ||
             is_kw(toks_[j], "limit") || is_kw(toks_[j], "window");
    };

    std::size_t from_start = hi, select_end = hi;
    for (std::size_t j = lo + 1; j < hi; ++j) {
      if (is_punct(toks_[j], '(')) {
        j = match_[j];
        continue;
      }
      if (is_kw(toks_[j], "from")) {
        from_start = j + 1;
        select_end = j;
        break;
      }
      if (is_clause_kw(j)) {
        select_end = j;
        break;
      }
    }

    std::size_t from_end = from_start;
    if (from_start < hi) {
      from_end = hi;
      for (std::size_t j = from_start; j < hi; ++j) {
        if (is_punct(toks_[j], '(')) {
          j = match_[j];
          continue;
        }
        if (is_clause_kw(j)) {
          from_end = j;
          break;
        }
      }
    }

    std::vector<std::pair<std::size_t, std::size_t>> expr_ranges;
    expr_ranges.emplace_back(lo + 1, select_end);
    if (from_start < hi) parse_from_items(from_start, from_end, scope, expr_ranges);
    expr_ranges.emplace_back(from_start < hi ? from_end : select_end, hi);

    collect_select_aliases(lo + 1, select_end, scope);
    for (auto [a, b] : expr_ranges) scan_expr(a, b, scope);
  }

  void parse_from_items(std::size_t lo, std::size_t hi, Scope& scope,
                        std::vector<std::pair<std::size_t, std::size_t>>& expr_ranges) {
    std::size_t i = lo;
    auto at_join_boundary = [&](std::size_t j) {
      return is_punct(toks_[j], ',') || is_kw(toks_[j], "join") ||
             is_kw(toks_[j], "left") || is_kw(toks_[j], "right") ||
             is_kw(toks_[j], "full") || is_kw(toks_[j], "inner") ||
             is_kw(toks_[j], "outer") || is_kw(toks_[j], "cross") ||
             is_kw(toks_[j], "natural");
    };

    while (i < hi) {
      // Skip separators and join keyword runs.
      while (i < hi && at_join_boundary(i)) ++i;
      if (i >= hi) break;

      if (is_kw(toks_[i], "on")) {
        // Expression until the next top-level item boundary.
        std::size_t j = i + 1;
        while (j < hi && !at_join_boundary(j)) {
          if (is_punct(toks_[j], '(')) {
            j = match_[j] + 1;
            continue;
          }
          ++j;
        }
        expr_ranges.emplace_back(i + 1, j);
        i = j;
        continue;
      }
      if (is_kw(toks_[i], "using")) {
        if (i + 1 < hi && is_punct(toks_[i + 1], '(')) {
          expr_ranges.emplace_back(i + 2, match_[i + 1]);
          i = match_[i + 1] + 1;
        } else {
          ++i;
        }
        continue;
      }

      if (is_punct(toks_[i], '(')) {
        std::size_t close = match_[i];
        std::size_t inner = i + 1;
        if (inner < close && (is_kw(toks_[inner], "select") || is_kw(toks_[inner], "with"))) {
          parse_query(inner, close, &scope);
          scope.derived_items += 1;
          i = close + 1;
          std::string alias = take_alias(i, hi);
          if (!alias.empty()) scope.derived.insert(alias);
        } else {
          parse_from_items(inner, close, scope, expr_ranges);  // nested join
          i = close + 1;
          std::string alias = take_alias(i, hi);
          if (!alias.empty()) scope.derived.insert(alias);
        }
        continue;
      }

      if (toks_[i].kind == TokKind::Ident && !is_keyword(toks_[i])) {
        // schema-qualified chains keep only the final component
        std::string name = toks_[i].text;
        ++i;
        while (i + 1 < hi && is_punct(toks_[i], '.') && toks_[i + 1].kind == TokKind::Ident) {
          name = toks_[i + 1].text;
          i += 2;
        }
        if (i < hi && is_punct(toks_[i], '(')) {
          // Table-valued function: arguments are expressions.
          expr_ranges.emplace_back(i + 1, match_[i]);
          i = match_[i] + 1;
          std::string alias = take_alias(i, hi);
          if (!alias.empty()) scope.derived.insert(alias);
          scope.derived_items += 1;
          continue;
        }
        std::string alias = take_alias(i, hi);
        if (scope.cte_visible(name)) {
          scope.derived.insert(name);
          scope.derived_items += 1;
          if (!alias.empty()) scope.derived.insert(alias);
        } else {
          out_.tables.insert(name);
          scope.base_tables.push_back(name);
          scope.alias_to_table.emplace(name, name);
          if (!alias.empty()) scope.alias_to_table[alias] = name;
        }
        // INDEXED BY idx / NOT INDEXED hints
        if (i < hi && is_kw(toks_[i], "not") && i + 1 < hi && is_kw(toks_[i + 1], "indexed")) {
          i += 2;
        } else if (i < hi && is_kw(toks_[i], "indexed")) {
          i += 2;  // INDEXED BY
          if (i < hi && toks_[i].kind == TokKind::Ident) ++i;
        }
        continue;
      }

      throw ParseFail("unexpected token in FROM");
    }
  }

  // Optional [AS] alias directly after a FROM item; advances i past it.
  std::string take_alias(std::size_t& i, std::size_t hi) {
    if (i < hi && is_kw(toks_[i], "as")) {
      if (i + 1 >= hi || toks_[i + 1].kind != TokKind::Ident) throw ParseFail("bad alias");
      std::string alias = toks_[i + 1].text;
      i += 2;
      return alias;
    }
    if (i < hi && toks_[i].kind == TokKind::Ident && !is_keyword(toks_[i])) {
      std::string alias = toks_[i].text;
      ++i;
      return alias;
    }
    return {};
  }

  void collect_select_aliases(std::size_t lo, std::size_t hi, Scope& scope) {
    for (std::size_t j = lo; j < hi; ++j) {
      if (is_punct(toks_[j], '(')) {
        j = match_[j];
        continue;
      }
      if (is_kw(toks_[j], "as") && j + 1 < hi && toks_[j + 1].kind == TokKind::Ident) {
        scope.select_aliases.insert(toks_[j + 1].text);
      }
    }
  }

  void scan_expr(std::size_t lo, std::size_t hi, const Scope& scope) {
    std::size_t i = lo;
    while (i < hi) {
      const Token& t = toks_[i];
      if (is_punct(t, '(')) {
        std::size_t close = match_[i];
        std::size_t inner = i + 1;
        if (inner < close && (is_kw(toks_[inner], "select") || is_kw(toks_[inner], "with"))) {
          parse_query(inner, close, &scope);
          i = close + 1;
        } else {
          ++i;  // descend into plain parentheses
        }
        continue;
      }
      if (t.kind == TokKind::Ident && is_kw(t, "as")) {
        i += 2;  // the alias (or cast target type) is never a column
        continue;
      }
      if (t.kind == TokKind::Ident && !is_keyword(t)) {
        // Identifier chain: a, a.b, a.b.c, a.*, possibly a function name.
        std::vector<std::string> chain{t.text};
        std::size_t j = i + 1;
        bool star = false;
        while (j + 1 < hi && is_punct(toks_[j], '.')) {
          if (toks_[j + 1].kind == TokKind::Ident) {
            chain.push_back(toks_[j + 1].text);
            j += 2;
          } else if (toks_[j + 1].kind == TokKind::Star) {
            star = true;
            j += 2;
            break;
          } else {
            break;
          }
        }
        if (j < hi && is_punct(toks_[j], '(')) {
          i = j;  // function call: skip the name, scan arguments
          continue;
        }
        if (!star) record_column(chain, scope);
        i = j;
        continue;
      }
      ++i;
    }
  }

  void record_column(const std::vector<std::string>& chain, const Scope& scope) {
    if (chain.size() == 1) {
      const std::string& c = chain[0];
      if (scope.select_aliases.count(c) > 0) return;
      const Scope* qs = qualifying_scope(&scope);
      if (qs != nullptr && qs->base_tables.size() == 1 && qs->derived_items == 0) {
        out_.columns.insert(qs->base_tables[0] + "." + c);
      } else if (qs != nullptr && qs->base_tables.empty() && qs->derived_items > 0) {
        // Only derived sources are in scope, so the column cannot belong to a
        // base table; drop it like any other derived-output reference.
      } else {
        out_.columns.insert(c);
      }
      return;
    }
    // db.table.column chains keep the last two components.
    const std::string& q = chain[chain.size() - 2];
    const std::string& c = chain.back();
    Resolution r = resolve_qualifier(&scope, q);
    switch (r.kind) {
      case QualifierKind::BaseTable:
        out_.columns.insert(r.table + "." + c);
        break;
      case QualifierKind::Derived:
        break;  // derived-relation output, not a schema entity
      case QualifierKind::Unknown:
        out_.columns.insert(q + "." + c);
        break;
    }
  }
};

}  // namespace

EntitySet extract_entities(std::string_view sql) {
  EntitySet out;
  try {
    Extractor ex(lex(sql), out);
    ex.run();
  } catch (const ParseFail&) {
    return {};
  }
  return out;
}

double entity_overlap(const EntitySet& predicted, const EntitySet& gold) {
  std::size_t gold_total = gold.tables.size() + gold.columns.size();
  if (gold_total == 0) return 1.0;
  std::size_t hits = 0;
  for (const auto& t : gold.tables) hits += predicted.tables.count(t);
  for (const auto& c : gold.columns) hits += predicted.columns.count(c);
  return static_cast<double>(hits) / static_cast<double>(gold_total);
}

}  // namespace sqlrl::sql_entities
