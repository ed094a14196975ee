#pragma once

#include <set>
#include <string>
#include <string_view>

namespace sqlrl::sql_entities {

// Schema entities referenced by a query. Names are lowercase with identifier
// quoting removed; columns are alias-resolved to "table.column" where the
// owning table is known and left bare otherwise.
struct EntitySet {
  std::set<std::string> tables;
  std::set<std::string> columns;

  bool empty() const { return tables.empty() && columns.empty(); }
  bool operator==(const EntitySet&) const = default;
};

// Best-effort structural extraction for reward scoring. Tables come from
// FROM/JOIN clauses (including subqueries and CTE bodies; CTE names and
// their references are not base tables). Columns come from every clause,
// qualified through aliases; references into derived relations (subquery or
// CTE outputs, select-list aliases) and `*` contribute nothing. Total:
// anything unparseable yields the empty set.
EntitySet extract_entities(std::string_view sql);

// Pooled overlap |pred ∩ gold| / |gold| over tables and columns together.
// An empty gold set yields 1.0 (vacuous satisfaction).
double entity_overlap(const EntitySet& predicted, const EntitySet& gold);

}  // namespace sqlrl::sql_entities
