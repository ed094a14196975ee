#pragma once

// Throwaway SQLite files for tests: built read-write from a SQL script, then
// handed to the read-only harness and deleted on destruction.

#include <sqlite3.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace testutil {

inline std::string unique_path(const std::string& hint) {
  static std::atomic<unsigned> counter{0};
  auto dir = std::filesystem::temp_directory_path();
  std::ostringstream name;
  name << "sqlrl_" << hint << "_" << ::getpid() << "_" << counter++ << ".db";
  return (dir / name.str()).string();
}

class TempDb {
 public:
  explicit TempDb(const std::string& script, const std::string& hint = "fixture")
      : path_(unique_path(hint)) {
    sqlite3* db = nullptr;
    if (sqlite3_open_v2(path_.c_str(), &db,
                        SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr) != SQLITE_OK) {
      throw std::runtime_error("fixture: cannot create " + path_);
    }
    char* err = nullptr;
    if (sqlite3_exec(db, script.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err != nullptr ? err : "unknown";
      sqlite3_free(err);
      sqlite3_close(db);
      throw std::runtime_error("fixture script failed: " + msg);
    }
    sqlite3_close(db);
  }

  ~TempDb() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

  TempDb(const TempDb&) = delete;
  TempDb& operator=(const TempDb&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

inline std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
