#pragma once

#include <stdexcept>
#include <string>

namespace sqlrl {

// Base for every named failure the harness can raise. Conditions that are
// representable as values (e.g. a SQL error outcome) are not exceptions; only
// contract violations and unavailable resources throw.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A SQL block was present but contained no statement after trimming.
struct EmptySqlError : Error {
  using Error::Error;
};

// The database file could not be opened read-only. Distinct from a SQL error:
// the query never ran.
struct DbUnavailableError : Error {
  using Error::Error;
};

// A query raised an engine error in a context that cannot represent it as an
// outcome value (e.g. timing a statement that fails to execute).
struct QueryFailedError : Error {
  using Error::Error;
};

// No scripted rule matched the incoming generation request.
struct NoScriptMatchError : Error {
  using Error::Error;
};

// The completion endpoint could not be reached or returned a server failure.
struct EndpointUnavailableError : Error {
  using Error::Error;
};

// The completion endpoint answered with a body the client cannot interpret.
struct MalformedResponseError : Error {
  using Error::Error;
};

// Parallel arrays disagree on group size or per-rollout token counts.
struct ShapeMismatchError : Error {
  using Error::Error;
};

// An unmasked log-probability (or advantage) is NaN or infinite.
struct NonFiniteInputError : Error {
  using Error::Error;
};

// Advantage normalization over zero rollouts.
struct EmptyGroupError : Error {
  using Error::Error;
};

// Segment token ranges do not partition the token axis.
struct InconsistentSpansError : Error {
  using Error::Error;
};

// Every decoded path failed to produce a final SQL.
struct NoCandidatesError : Error {
  using Error::Error;
};

// A dataset line is missing required fields or carries wrong types. Carries
// the 1-based line number of the offending record.
struct SchemaViolationError : Error {
  SchemaViolationError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

// A dataset record points at a database file that cannot be opened.
struct MissingDatabaseError : Error {
  using Error::Error;
};

}  // namespace sqlrl
