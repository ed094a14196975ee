#include "sqlrl/markup.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "sqlrl/errors.hpp"

namespace sqlrl::markup {

namespace {

struct TagSpec {
  SegmentKind kind;
  std::string_view open;
  std::string_view close;
};

constexpr std::array<TagSpec, 4> kTags{{
    {SegmentKind::Think, kThinkOpen, kThinkClose},
    {SegmentKind::IntermediateSql, kIntermediateSqlOpen, kIntermediateSqlClose},
    {SegmentKind::Result, kResultOpen, kResultClose},
    {SegmentKind::FinalSql, kFinalSqlOpen, kFinalSqlClose},
}};

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_space);
}

// Earliest fence close after `from`, either form.
std::size_t find_fence_close(std::string_view body, std::size_t from) {
  std::size_t a = body.find(kSqlFenceClose, from);
  std::size_t b = body.find(kSqlFenceCloseAlt, from);
  return std::min(a, b);
}

// Strict form check used by validate_format: exactly one fence opener, a
// close after it, nothing but whitespace after the close, nonempty statement.
bool has_strict_fenced_sql(std::string_view body) {
  std::size_t open = body.find(kSqlFenceOpen);
  if (open == std::string_view::npos) return false;
  std::size_t content = open + kSqlFenceOpen.size();
  // Guard against a longer info string ("```sqlite" is not the protocol fence).
  if (content < body.size()) {
    unsigned char next = static_cast<unsigned char>(body[content]);
    if (std::isalnum(next) || next == '_') return false;
  }
  if (body.find(kSqlFenceOpen, content) != std::string_view::npos) return false;
  std::size_t close = find_fence_close(body, content);
  if (close == std::string_view::npos) return false;
  if (trim(body.substr(open + kSqlFenceOpen.size(),
                       close - open - kSqlFenceOpen.size()))
          .empty()) {
    return false;
  }
  return all_whitespace(body.substr(close + 3));
}

// Matches the tagged-segment kind sequence against
// (Think (IntermediateSql Result)?)* Think? FinalSql without backtracking:
// scan Think-led iterations greedily, then require the trailing FinalSql.
bool kinds_match_grammar(const std::vector<SegmentKind>& kinds) {
  std::size_t i = 0;
  const std::size_t n = kinds.size();
  while (i < n && kinds[i] == SegmentKind::Think) {
    if (i + 2 < n && kinds[i + 1] == SegmentKind::IntermediateSql &&
        kinds[i + 2] == SegmentKind::Result) {
      i += 3;  // Think IntermediateSql Result
    } else {
      i += 1;  // bare Think (covers the optional trailing Think as well)
    }
  }
  return i + 1 == n && kinds[i] == SegmentKind::FinalSql;
}

}  // namespace

Origin origin_of(SegmentKind kind) {
  return kind == SegmentKind::Result ? Origin::Environment : Origin::Model;
}

std::string_view open_tag(SegmentKind kind) {
  for (const auto& t : kTags) {
    if (t.kind == kind) return t.open;
  }
  return {};
}

std::string_view close_tag(SegmentKind kind) {
  for (const auto& t : kTags) {
    if (t.kind == kind) return t.close;
  }
  return {};
}

Trace parse_trace(std::string_view raw) {
  Trace trace;
  std::size_t plain_start = 0;  // start of the pending untagged run
  std::size_t pos = 0;          // scan cursor

  auto flush_untagged = [&](std::size_t upto) {
    if (upto > plain_start) {
      trace.segments.push_back({SegmentKind::Untagged, Origin::Model,
                                std::string(raw.substr(plain_start, upto - plain_start)),
                                plain_start, upto});
    }
  };

  while (pos < raw.size()) {
    // Earliest opening tag at or after the cursor.
    std::size_t best_pos = std::string_view::npos;
    const TagSpec* best = nullptr;
    for (const auto& t : kTags) {
      std::size_t p = raw.find(t.open, pos);
      if (p < best_pos) {
        best_pos = p;
        best = &t;
      }
    }
    if (best == nullptr) break;

    std::size_t body_start = best_pos + best->open.size();
    std::size_t close_pos = raw.find(best->close, body_start);
    if (close_pos == std::string_view::npos) {
      // Unclosed tag (e.g. budget exhaustion mid-block): the tag characters
      // stay plain text and scanning resumes after them, so later complete
      // blocks still parse.
      pos = body_start;
      continue;
    }

    flush_untagged(best_pos);
    std::size_t seg_end = close_pos + best->close.size();
    trace.segments.push_back({best->kind, origin_of(best->kind),
                              std::string(raw.substr(body_start, close_pos - body_start)),
                              best_pos, seg_end});
    plain_start = pos = seg_end;
  }
  flush_untagged(raw.size());

  for (const auto& seg : trace.segments) {
    if (seg.kind == SegmentKind::IntermediateSql) ++trace.interaction_count;
    if (seg.kind == SegmentKind::FinalSql && !trace.final_sql.has_value()) {
      try {
        trace.final_sql = extract_sql(seg.text);
      } catch (const EmptySqlError&) {
        // An empty final block yields no final SQL; later blocks may still.
      }
    }
  }
  return trace;
}

std::string reconstruct(const Trace& trace) {
  std::string out;
  for (const auto& seg : trace.segments) {
    if (seg.kind == SegmentKind::Untagged) {
      out += seg.text;
    } else {
      out += open_tag(seg.kind);
      out += seg.text;
      out += close_tag(seg.kind);
    }
  }
  return out;
}

bool validate_format(const Trace& trace) {
  std::vector<SegmentKind> kinds;
  kinds.reserve(trace.segments.size());
  for (const auto& seg : trace.segments) {
    if (seg.kind == SegmentKind::Untagged) {
      // Inter-block newlines are layout, anything else is a violation.
      if (!all_whitespace(seg.text)) return false;
      continue;
    }
    if (seg.kind == SegmentKind::IntermediateSql || seg.kind == SegmentKind::FinalSql) {
      if (!has_strict_fenced_sql(seg.text)) return false;
    }
    kinds.push_back(seg.kind);
  }
  return kinds_match_grammar(kinds);
}

std::string extract_sql(std::string_view block_text) {
  std::string_view inner = block_text;
  std::size_t open = block_text.find(kSqlFenceOpen);
  if (open != std::string_view::npos) {
    std::size_t start = open + kSqlFenceOpen.size();
    std::size_t close = find_fence_close(block_text, start);
    inner = close == std::string_view::npos
                ? block_text.substr(start)
                : block_text.substr(start, close - start);
  }
  std::string_view sql = trim(inner);
  if (sql.empty()) throw EmptySqlError("SQL block contains no statement");
  return std::string(sql);
}

}  // namespace sqlrl::markup
