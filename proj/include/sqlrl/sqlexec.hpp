#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace sqlrl::sqlexec {

inline constexpr int kDefaultRowCap = 3;
inline constexpr std::chrono::milliseconds kDefaultTimeout{30'000};
inline constexpr int kDefaultTimingRepeats = 5;

// Fixed feedback strings. These are wire format seen by the model; byte
// changes here silently shift the policy's input distribution.
inline constexpr std::string_view kNoDataNotice = "No data available in the database.";
inline constexpr std::string_view kTruncationNotice = "Omit the sample below......";

enum class ExecStatus { Ok, SqlError, Timeout };

// Cells are canonical text: NULL sentinel, integers in decimal,
// integral-valued floats rendered as integers, other floats shortest
// round-trip, text byte-exact, blobs hex-tagged.
struct ExecutionOutcome {
  ExecStatus status = ExecStatus::Ok;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  bool truncated = false;
  std::optional<std::string> error_message;
  std::chrono::nanoseconds elapsed{0};
};

// Stable content digest of an outcome, used to group candidates whose
// executions are equivalent. Value digests are order-insensitive (rows are
// hashed sorted), matching compare_results for queries without a top-level
// ORDER BY. All failed executions collapse into the Error kind.
struct ResultSignature {
  enum class Kind { Value, Error };
  Kind kind = Kind::Error;
  std::uint64_t digest = 0;

  static ResultSignature of(const ExecutionOutcome& outcome);
  bool operator==(const ResultSignature&) const = default;
  bool operator<(const ResultSignature& other) const {
    return kind != other.kind ? kind < other.kind : digest < other.digest;
  }
};

// Read-only handle to a SQLite file. Opening never creates or mutates the
// file; a handle must not be shared across threads (open one per worker).
class Database {
 public:
  explicit Database(const std::string& path);  // throws DbUnavailableError
  ~Database();
  Database(Database&& other) noexcept;
  Database& operator=(Database&& other) noexcept;
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  // Runs a single SELECT (or CTE ending in SELECT) and materializes at most
  // row_cap rows; truncated is set when more rows existed. Any other
  // statement yields SqlError "statement not permitted". Engine failures and
  // timeouts are returned as outcomes, never thrown.
  ExecutionOutcome execute(std::string_view sql, int row_cap,
                           std::chrono::milliseconds timeout = kDefaultTimeout);

  // Full materialization (no row cap), used for comparison and timing.
  ExecutionOutcome execute_full(std::string_view sql,
                                std::chrono::milliseconds timeout = kDefaultTimeout);

  const std::string& path() const { return path_; }

 private:
  ExecutionOutcome run(std::string_view sql, std::optional<int> row_cap,
                       std::chrono::milliseconds timeout);

  sqlite3* db_ = nullptr;
  std::string path_;
};

// Renders an outcome into the feedback block body: a |c1|c2| header line and
// one |v1|v2| line per row, the fixed no-data notice for empty results, the
// fixed truncation notice when rows were cut, or the engine error verbatim.
std::string render_feedback(const ExecutionOutcome& outcome);

// Execution-equivalence of two fully materialized outcomes: multiset
// equality of canonical rows (positional columns, names ignored). Row order
// must also match when the predicted SQL orders its result at the top level.
// False whenever either execution failed.
bool compare_results(const ExecutionOutcome& predicted, const ExecutionOutcome& gold,
                     std::string_view predicted_sql);

// True when `sql` carries an ORDER BY outside any parentheses, string, or
// comment (i.e. ordering is part of the query's contract).
bool has_top_level_order_by(std::string_view sql);

// Median wall-clock time of `repeats` full-materialization runs after one
// discarded warm-up. Throws QueryFailedError when any run fails.
std::chrono::nanoseconds time_execution(Database& db, std::string_view sql,
                                        int repeats = kDefaultTimingRepeats,
                                        std::chrono::milliseconds timeout = kDefaultTimeout);

}  // namespace sqlrl::sqlexec
