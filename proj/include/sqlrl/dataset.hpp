#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "sqlrl/sqlexec.hpp"

namespace sqlrl::dataset {

// One benchmark question. schema_prompt and matched_contents are the
// pre-rendered placeholder payloads for the prompt templates; evidence and
// difficulty are optional in the file and default to empty.
struct DatasetExample {
  std::string question_id;
  std::string question;
  std::string evidence;
  std::string db_path;
  std::string gold_sql;
  std::string schema_prompt;
  std::string matched_contents;
  std::string difficulty;

  bool operator==(const DatasetExample&) const = default;
};

struct LoadOptions {
  // Skips the gold-SQL dry run (each gold statement otherwise must execute
  // cleanly on its database before the dataset is accepted).
  bool skip_gold_check = false;
  std::chrono::milliseconds gold_timeout = sqlexec::kDefaultTimeout;
};

// Reads a line-delimited JSON file of DatasetExample records. Relative
// db_path values resolve against the dataset file's directory. Blank lines
// are skipped. Throws SchemaViolationError (with the 1-based line number) for
// malformed records, MissingDatabaseError for absent databases or failing
// gold statements, and Error when the file itself cannot be read.
std::vector<DatasetExample> load_dataset(const std::string& path,
                                         const LoadOptions& opts = {});

}  // namespace sqlrl::dataset
