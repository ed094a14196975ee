#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sqlrl::markup {

// Wire-format protocol constants. The tag strings are case-sensitive and
// contain no whitespace; the executor appends feedback wrapped in the result
// tags and the trainer masks those spans, so none of these may drift.
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kIntermediateSqlOpen = "<intermediate_sql>";
inline constexpr std::string_view kIntermediateSqlClose = "</intermediate_sql>";
inline constexpr std::string_view kResultOpen = "<result>";
inline constexpr std::string_view kResultClose = "</result>";
inline constexpr std::string_view kFinalSqlOpen = "<final_sql>";
inline constexpr std::string_view kFinalSqlClose = "</final_sql>";

// SQL blocks are fenced. The canonical close is the backtick fence; the
// apostrophe form appears in real transcripts and is accepted as equivalent.
inline constexpr std::string_view kSqlFenceOpen = "```sql";
inline constexpr std::string_view kSqlFenceClose = "```";
inline constexpr std::string_view kSqlFenceCloseAlt = "'''";

enum class SegmentKind { Think, IntermediateSql, Result, FinalSql, Untagged };

// Result segments are environment feedback by definition; everything else is
// model output.
enum class Origin { Model, Environment };

struct Segment {
  SegmentKind kind = SegmentKind::Untagged;
  Origin origin = Origin::Model;
  std::string text;        // body with the enclosing tags stripped
  std::size_t begin = 0;   // half-open character span into the raw rollout,
  std::size_t end = 0;     // covering the tags for tagged segments

  bool operator==(const Segment&) const = default;
};

struct Trace {
  std::vector<Segment> segments;
  std::optional<std::string> final_sql;  // extracted from the first well-formed
                                         // final block, absent when empty
  int interaction_count = 0;             // number of IntermediateSql segments

  bool operator==(const Trace&) const = default;
};

Origin origin_of(SegmentKind kind);
std::string_view open_tag(SegmentKind kind);
std::string_view close_tag(SegmentKind kind);

// Total over arbitrary byte strings: malformed input degrades to Untagged
// segments, never a failure. Segments partition [0, raw.size()).
Trace parse_trace(std::string_view raw);

// Byte-exact inverse of parse_trace (re-wraps tagged bodies in their tags).
std::string reconstruct(const Trace& trace);

// Strict template conformance: tagged segments must match
// (Think (IntermediateSql Result)?)* Think? FinalSql, every SQL block must be
// properly fenced with a nonempty statement, and only whitespace-only
// Untagged gaps (inter-block layout) are tolerated.
bool validate_format(const Trace& trace);

// Pulls the statement out of a SQL block body. Prefers the fenced form; a
// body without a fence is returned trimmed as-is (lenient fallback for reward
// scoring). Throws EmptySqlError when nothing remains after trimming.
std::string extract_sql(std::string_view block_text);

}  // namespace sqlrl::markup
