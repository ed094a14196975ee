#include "sqlrl/sqlexec.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <cstring>

#include "sqlrl/errors.hpp"

namespace sqlrl::sqlexec {

namespace {

constexpr std::string_view kNotPermitted = "statement not permitted";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

char lower(char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_';
}

// Position after leading whitespace and SQL comments.
std::size_t skip_blank(std::string_view sql, std::size_t i) {
  while (i < sql.size()) {
    if (is_space(sql[i])) {
      ++i;
    } else if (sql.compare(i, 2, "--") == 0) {
      std::size_t nl = sql.find('\n', i);
      i = nl == std::string_view::npos ? sql.size() : nl + 1;
    } else if (sql.compare(i, 2, "/*") == 0) {
      std::size_t end = sql.find("*/", i + 2);
      i = end == std::string_view::npos ? sql.size() : end + 2;
    } else {
      break;
    }
  }
  return i;
}

bool first_keyword_is_query(std::string_view sql) {
  std::size_t i = skip_blank(sql, 0);
  std::size_t j = i;
  while (j < sql.size() && is_ident_char(sql[j])) ++j;
  std::string kw;
  for (std::size_t k = i; k < j; ++k) kw += lower(sql[k]);
  return kw == "select" || kw == "with";
}

std::string render_double(double v) {
  // Integral-valued floats canonicalize to the integer spelling so REAL 3.0
  // and INTEGER 3 compare equal cell-wise.
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.007199254740992e15) {
    auto as_int = static_cast<long long>(v);
    return std::to_string(as_int);
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  assert(ec == std::errc());
  return std::string(buf, ptr);
}

std::string render_blob(const void* data, int size) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out = "x'";
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (int i = 0; i < size; ++i) {
    out += hex[bytes[i] >> 4];
    out += hex[bytes[i] & 0xf];
  }
  out += '\'';
  return out;
}

std::string canonical_cell(sqlite3_stmt* stmt, int col) {
  switch (sqlite3_column_type(stmt, col)) {
    case SQLITE_NULL:
      return "NULL";
    case SQLITE_INTEGER:
      return std::to_string(sqlite3_column_int64(stmt, col));
    case SQLITE_FLOAT:
      return render_double(sqlite3_column_double(stmt, col));
    case SQLITE_BLOB:
      return render_blob(sqlite3_column_blob(stmt, col),
                         sqlite3_column_bytes(stmt, col));
    default: {
      const auto* text = sqlite3_column_text(stmt, col);
      int n = sqlite3_column_bytes(stmt, col);
      return std::string(reinterpret_cast<const char*>(text), static_cast<std::size_t>(n));
    }
  }
}

struct Deadline {
  std::chrono::steady_clock::time_point at;
};

extern "C" int progress_check(void* ctx) {
  auto* deadline = static_cast<Deadline*>(ctx);
  return std::chrono::steady_clock::now() >= deadline->at ? 1 : 0;
}

std::string join_cells(const std::vector<std::string>& cells) {
  std::string line = "|";
  for (const auto& c : cells) {
    line += c;
    line += '|';
  }
  return line;
}

}  // namespace

Database::Database(const std::string& path) : path_(path) {
  int rc = sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READONLY, nullptr);
  if (rc != SQLITE_OK) {
    std::string msg = db_ != nullptr ? sqlite3_errmsg(db_) : "out of memory";
    if (db_ != nullptr) sqlite3_close(db_);
    db_ = nullptr;
    throw DbUnavailableError("cannot open database '" + path + "': " + msg);
  }
  sqlite3_extended_result_codes(db_, 0);
}

Database::~Database() {
  if (db_ != nullptr) sqlite3_close(db_);
}

Database::Database(Database&& other) noexcept : db_(other.db_), path_(std::move(other.path_)) {
  other.db_ = nullptr;
}

Database& Database::operator=(Database&& other) noexcept {
  if (this != &other) {
    if (db_ != nullptr) sqlite3_close(db_);
    db_ = other.db_;
    path_ = std::move(other.path_);
    other.db_ = nullptr;
  }
  return *this;
}

ExecutionOutcome Database::execute(std::string_view sql, int row_cap,
                                   std::chrono::milliseconds timeout) {
  assert(row_cap >= 1);
  return run(sql, row_cap, timeout);
}

ExecutionOutcome Database::execute_full(std::string_view sql,
                                        std::chrono::milliseconds timeout) {
  return run(sql, std::nullopt, timeout);
}

ExecutionOutcome Database::run(std::string_view sql, std::optional<int> row_cap,
                               std::chrono::milliseconds timeout) {
  ExecutionOutcome out;
  auto started = std::chrono::steady_clock::now();
  auto fail = [&](ExecStatus status, std::string message) {
    out = ExecutionOutcome{};
    out.status = status;
    out.error_message = std::move(message);
    out.elapsed = std::chrono::steady_clock::now() - started;
    return out;
  };

  if (!first_keyword_is_query(sql)) return fail(ExecStatus::SqlError, std::string(kNotPermitted));

  Deadline deadline{started + timeout};
  sqlite3_progress_handler(db_, 512, progress_check, &deadline);

  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  int rc = sqlite3_prepare_v2(db_, sql.data(), static_cast<int>(sql.size()), &stmt, &tail);
  if (rc != SQLITE_OK) {
    std::string msg = sqlite3_errmsg(db_);
    sqlite3_progress_handler(db_, 0, nullptr, nullptr);
    // A write statement smuggled behind WITH is refused by the read-only
    // connection at prepare time; report it as the allow-list rejection.
    if (msg.find("readonly database") != std::string::npos) {
      msg = std::string(kNotPermitted);
    }
    return fail(rc == SQLITE_INTERRUPT ? ExecStatus::Timeout : ExecStatus::SqlError, msg);
  }

  // Reject multi-statement input: anything significant after the first
  // statement (a bare trailing semicolon run is fine).
  if (stmt == nullptr) {
    sqlite3_progress_handler(db_, 0, nullptr, nullptr);
    return fail(ExecStatus::SqlError, std::string(kNotPermitted));
  }
  {
    std::string_view rest(tail, sql.size() - static_cast<std::size_t>(tail - sql.data()));
    std::size_t i = 0;
    while (true) {
      std::size_t before = i;
      while (i < rest.size() && (is_space(rest[i]) || rest[i] == ';')) ++i;
      i = skip_blank(rest, i);
      if (i == before) break;
    }
    if (i < rest.size() || !sqlite3_stmt_readonly(stmt) || sqlite3_column_count(stmt) == 0) {
      sqlite3_finalize(stmt);
      sqlite3_progress_handler(db_, 0, nullptr, nullptr);
      return fail(ExecStatus::SqlError, std::string(kNotPermitted));
    }
  }

  int ncols = sqlite3_column_count(stmt);
  for (int c = 0; c < ncols; ++c) {
    const char* name = sqlite3_column_name(stmt, c);
    out.columns.emplace_back(name != nullptr ? name : "");
  }

  while (true) {
    rc = sqlite3_step(stmt);
    if (rc == SQLITE_ROW) {
      if (row_cap.has_value() && static_cast<int>(out.rows.size()) == *row_cap) {
        out.truncated = true;
        break;
      }
      std::vector<std::string> row;
      row.reserve(static_cast<std::size_t>(ncols));
      for (int c = 0; c < ncols; ++c) row.push_back(canonical_cell(stmt, c));
      out.rows.push_back(std::move(row));
    } else if (rc == SQLITE_DONE) {
      break;
    } else {
      std::string msg = sqlite3_errmsg(db_);
      sqlite3_finalize(stmt);
      sqlite3_progress_handler(db_, 0, nullptr, nullptr);
      return fail(rc == SQLITE_INTERRUPT ? ExecStatus::Timeout : ExecStatus::SqlError, msg);
    }
  }

  sqlite3_finalize(stmt);
  sqlite3_progress_handler(db_, 0, nullptr, nullptr);
  out.status = ExecStatus::Ok;
  out.elapsed = std::chrono::steady_clock::now() - started;
  return out;
}

std::string render_feedback(const ExecutionOutcome& outcome) {
  if (outcome.status != ExecStatus::Ok) {
    return outcome.error_message.value_or("unknown execution error");
  }
  std::string out = join_cells(outcome.columns);
  if (outcome.rows.empty()) {
    out += '\n';
    out += kNoDataNotice;
    return out;
  }
  for (const auto& row : outcome.rows) {
    out += '\n';
    out += join_cells(row);
  }
  if (outcome.truncated) {
    out += '\n';
    out += kTruncationNotice;
  }
  return out;
}

bool has_top_level_order_by(std::string_view sql) {
  int depth = 0;
  std::size_t i = 0;
  bool pending_order = false;
  while (i < sql.size()) {
    char c = sql[i];
    if (c == '\'' || c == '"' || c == '`') {
      char q = c;
      ++i;
      while (i < sql.size()) {
        if (sql[i] == q) {
          if (i + 1 < sql.size() && sql[i + 1] == q) {
            i += 2;  // doubled quote escape
            continue;
          }
          ++i;
          break;
        }
        ++i;
      }
      continue;
    }
    if (c == '[') {
      std::size_t end = sql.find(']', i);
      i = end == std::string_view::npos ? sql.size() : end + 1;
      continue;
    }
    if (sql.compare(i, 2, "--") == 0 || sql.compare(i, 2, "/*") == 0) {
      i = skip_blank(sql, i);
      continue;
    }
    if (c == '(') {
      ++depth;
      ++i;
      continue;
    }
    if (c == ')') {
      depth = std::max(0, depth - 1);
      ++i;
      continue;
    }
    if (is_ident_char(c)) {
      std::size_t j = i;
      while (j < sql.size() && is_ident_char(sql[j])) ++j;
      if (depth == 0) {
        std::string word;
        for (std::size_t k = i; k < j; ++k) word += lower(sql[k]);
        if (pending_order && word == "by") return true;
        pending_order = word == "order";
      }
      i = j;
      continue;
    }
    if (!is_space(c)) pending_order = false;
    ++i;
  }
  return false;
}

bool compare_results(const ExecutionOutcome& predicted, const ExecutionOutcome& gold,
                     std::string_view predicted_sql) {
  if (predicted.status != ExecStatus::Ok || gold.status != ExecStatus::Ok) return false;
  assert(!predicted.truncated && !gold.truncated);
  if (has_top_level_order_by(predicted_sql)) return predicted.rows == gold.rows;
  auto a = predicted.rows;
  auto b = gold.rows;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

ResultSignature ResultSignature::of(const ExecutionOutcome& outcome) {
  if (outcome.status != ExecStatus::Ok) return {Kind::Error, 0};
  auto rows = outcome.rows;
  std::sort(rows.begin(), rows.end());
  // FNV-1a over sorted canonical cells; stable across platforms, unlike
  // std::hash. Lengths are hashed before content so cell and row boundaries
  // cannot alias.
  std::uint64_t h = 1469598103934665603ull;
  auto mix_byte = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  auto mix_size = [&](std::size_t n) {
    for (int shift = 0; shift < 64; shift += 8) {
      mix_byte(static_cast<unsigned char>((n >> shift) & 0xff));
    }
  };
  mix_size(rows.size());
  for (const auto& row : rows) {
    mix_size(row.size());
    for (const auto& cell : row) {
      mix_size(cell.size());
      for (unsigned char c : cell) mix_byte(c);
    }
  }
  return {Kind::Value, h};
}

std::chrono::nanoseconds time_execution(Database& db, std::string_view sql, int repeats,
                                        std::chrono::milliseconds timeout) {
  assert(repeats >= 1);
  auto check = [&](const ExecutionOutcome& o) {
    if (o.status != ExecStatus::Ok) {
      throw QueryFailedError("timed query failed: " +
                             o.error_message.value_or("unknown execution error"));
    }
  };
  check(db.execute_full(sql, timeout));  // warm-up, discarded

  std::vector<std::chrono::nanoseconds> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    auto o = db.execute_full(sql, timeout);
    check(o);
    samples.push_back(o.elapsed);
  }
  std::sort(samples.begin(), samples.end());
  std::size_t mid = samples.size() / 2;
  if (samples.size() % 2 == 1) return samples[mid];
  return (samples[mid - 1] + samples[mid]) / 2;
}

}  // namespace sqlrl::sqlexec
