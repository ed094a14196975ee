#include "sqlrl/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sqlrl/errors.hpp"

namespace sqlrl::dataset {

namespace {

std::string require_string(const nlohmann::json& record, const char* field,
                           std::size_t line) {
  if (!record.contains(field)) {
    throw SchemaViolationError(line, std::string("missing field '") + field + "'");
  }
  const auto& v = record.at(field);
  if (!v.is_string()) {
    throw SchemaViolationError(line, std::string("field '") + field +
                                         "' must be a string");
  }
  return v.get<std::string>();
}

std::string optional_string(const nlohmann::json& record, const char* field,
                            std::size_t line) {
  if (!record.contains(field) || record.at(field).is_null()) return "";
  const auto& v = record.at(field);
  if (!v.is_string()) {
    throw SchemaViolationError(line, std::string("field '") + field +
                                         "' must be a string when present");
  }
  return v.get<std::string>();
}

}  // namespace

std::vector<DatasetExample> load_dataset(const std::string& path,
                                         const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file: " + path);
  const auto base_dir = std::filesystem::path(path).parent_path();

  std::vector<DatasetExample> examples;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;

    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaViolationError(line_number, std::string("not valid JSON: ") + e.what());
    }
    if (!record.is_object()) {
      throw SchemaViolationError(line_number, "record must be a JSON object");
    }

    DatasetExample ex;
    ex.question_id = require_string(record, "question_id", line_number);
    ex.question = require_string(record, "question", line_number);
    ex.db_path = require_string(record, "db_path", line_number);
    ex.gold_sql = require_string(record, "gold_sql", line_number);
    ex.schema_prompt = require_string(record, "schema_prompt", line_number);
    ex.matched_contents = require_string(record, "matched_contents", line_number);
    ex.evidence = optional_string(record, "evidence", line_number);
    ex.difficulty = optional_string(record, "difficulty", line_number);

    if (ex.gold_sql.find_first_not_of(" \t\r\n;") == std::string::npos) {
      throw SchemaViolationError(line_number, "gold_sql is empty");
    }

    std::filesystem::path db(ex.db_path);
    if (db.is_relative()) db = base_dir / db;
    ex.db_path = db.string();
    if (!std::filesystem::exists(db)) {
      throw MissingDatabaseError("line " + std::to_string(line_number) +
                                 ": database not found: " + ex.db_path);
    }

    if (!opts.skip_gold_check) {
      sqlexec::Database conn(ex.db_path);
      auto outcome = conn.execute(ex.gold_sql, 1, opts.gold_timeout);
      if (outcome.status != sqlexec::ExecStatus::Ok) {
        throw MissingDatabaseError(
            "line " + std::to_string(line_number) + ": gold SQL for '" +
            ex.question_id + "' fails on " + ex.db_path + ": " +
            outcome.error_message.value_or("unknown error"));
      }
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace sqlrl::dataset
