#include "sqlrl/markup.hpp"

#include <random>
#include <regex>
#include <string>
#include <vector>

#include "doctest.h"
#include "sqlrl/errors.hpp"

using namespace sqlrl;
using namespace sqlrl::markup;

namespace {

// Independent grammar oracle: the production as a regex over kind letters.
// validate_format must agree with this on every tagged-kind sequence.
bool grammar_oracle(const std::string& letters) {
  static const std::regex re("^(T(IR)?)*T?F$");
  return std::regex_match(letters, re);
}

char letter_of(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return 'T';
    case SegmentKind::IntermediateSql: return 'I';
    case SegmentKind::Result: return 'R';
    case SegmentKind::FinalSql: return 'F';
    case SegmentKind::Untagged: return 'U';
  }
  return '?';
}

// Builds a raw rollout whose tagged kinds spell out `letters`, with bodies
// that pass the per-segment checks so only the kind sequence is under test.
std::string raw_from_letters(const std::string& letters) {
  std::string raw;
  for (char c : letters) {
    switch (c) {
      case 'T': raw += "<think>reasoning</think>"; break;
      case 'I':
        raw += "<intermediate_sql>The intermediate SQL query for verification "
               "is: ```sql\nSELECT * FROM t\n```</intermediate_sql>";
        break;
      case 'R': raw += "<result>\n|c|\n|1|\n</result>"; break;
      case 'F':
        raw += "<final_sql>The final SQL query is: ```sql\nSELECT 1\n"
               "```</final_sql>";
        break;
      default: FAIL("bad letter");
    }
    raw += "\n";
  }
  return raw;
}

std::string letters_of(const Trace& t) {
  std::string s;
  for (const auto& seg : t.segments) {
    if (seg.kind != SegmentKind::Untagged) s += letter_of(seg.kind);
  }
  return s;
}

}  // namespace

TEST_CASE("parse splits tagged segments and strips tags") {
  auto t = parse_trace("<think>a</think><final_sql>```sql SELECT 1```</final_sql>");
  REQUIRE(t.segments.size() == 2);
  CHECK(t.segments[0].kind == SegmentKind::Think);
  CHECK(t.segments[0].text == "a");
  CHECK(t.segments[0].begin == 0);
  CHECK(t.segments[0].end == 16);
  CHECK(t.segments[1].kind == SegmentKind::FinalSql);
  CHECK(t.final_sql == "SELECT 1");
  CHECK(t.interaction_count == 0);
}

TEST_CASE("unclosed tag degrades to untagged text") {
  auto t = parse_trace("<think>x");
  REQUIRE(t.segments.size() == 1);
  CHECK(t.segments[0].kind == SegmentKind::Untagged);
  CHECK(t.segments[0].text == "<think>x");
  CHECK_FALSE(t.final_sql.has_value());
}

TEST_CASE("unclosed tag does not swallow later complete blocks") {
  auto t = parse_trace("<think>a<final_sql>```sql SELECT 3```</final_sql>");
  REQUIRE(t.segments.size() == 2);
  CHECK(t.segments[0].kind == SegmentKind::Untagged);
  CHECK(t.segments[0].text == "<think>a");
  CHECK(t.segments[1].kind == SegmentKind::FinalSql);
  CHECK(t.final_sql == "SELECT 3");
}

TEST_CASE("result segments carry environment origin, all others model") {
  auto t = parse_trace(
      "<think>a</think><intermediate_sql>```sql SELECT 1```</intermediate_sql>"
      "<result>|c|</result>gap<final_sql>```sql SELECT 2```</final_sql>");
  REQUIRE(t.segments.size() == 5);
  CHECK(t.segments[0].origin == Origin::Model);
  CHECK(t.segments[1].origin == Origin::Model);
  CHECK(t.segments[2].origin == Origin::Environment);
  CHECK(t.segments[2].kind == SegmentKind::Result);
  CHECK(t.segments[3].kind == SegmentKind::Untagged);
  CHECK(t.segments[4].origin == Origin::Model);
  CHECK(t.interaction_count == 1);
}

TEST_CASE("every character belongs to exactly one segment") {
  const std::string raw =
      "lead<think>a</think>mid<result>r</result><final_sql>x</final_sql>tail";
  auto t = parse_trace(raw);
  std::size_t cursor = 0;
  for (const auto& seg : t.segments) {
    CHECK(seg.begin == cursor);
    CHECK(seg.end > seg.begin);
    cursor = seg.end;
  }
  CHECK(cursor == raw.size());
}

TEST_CASE("round trip is byte-exact and parse is idempotent on it") {
  const std::vector<std::string> cases = {
      "",
      "plain text only",
      "<think>a</think>\n<final_sql>```sql SELECT 1```</final_sql>",
      "<think>a<result>b</result>c</think>trail",
      "<intermediate_sql>```sql X``` stray</intermediate_sql><result></result>",
      "<think>unclosed",
      "</think>stray close<final_sql>```sql Y```</final_sql>",
      "<final_sql>one</final_sql><final_sql>two</final_sql>",
  };
  for (const auto& raw : cases) {
    CAPTURE(raw);
    auto t = parse_trace(raw);
    auto rendered = reconstruct(t);
    CHECK(rendered == raw);
    CHECK(parse_trace(rendered) == t);
  }
}

TEST_CASE("round trip holds on randomized tag soup") {
  std::mt19937 rng(7);
  const std::vector<std::string> pieces = {
      "<think>", "</think>", "<intermediate_sql>", "</intermediate_sql>",
      "<result>", "</result>", "<final_sql>", "</final_sql>",
      "text", " ", "\n", "```sql SELECT 1```", "<", ">", "</", "<th",
  };
  for (int iter = 0; iter < 500; ++iter) {
    std::string raw;
    int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) raw += pieces[rng() % pieces.size()];
    CAPTURE(raw);
    auto t = parse_trace(raw);
    REQUIRE(reconstruct(t) == raw);
    REQUIRE(parse_trace(reconstruct(t)) == t);
    std::size_t cursor = 0;
    for (const auto& seg : t.segments) {
      REQUIRE(seg.begin == cursor);
      cursor = seg.end;
    }
    REQUIRE(cursor == raw.size());
  }
}

TEST_CASE("validate accepts the canonical single-interaction shape") {
  auto t = parse_trace(raw_from_letters("TIRTF"));
  REQUIRE(t.segments.size() >= 5);
  CHECK(validate_format(t));
  CHECK(t.final_sql == "SELECT 1");
}

TEST_CASE("validate rejects malformed template shapes") {
  CHECK_FALSE(validate_format(parse_trace(raw_from_letters("TIRT"))));
  CHECK_FALSE(validate_format(parse_trace(raw_from_letters("TFF"))));
  CHECK_FALSE(validate_format(parse_trace(raw_from_letters("TRF"))));
  CHECK_FALSE(validate_format(parse_trace("")));
}

TEST_CASE("validate agrees with the grammar oracle on every short sequence") {
  // Exhaustive over kind strings up to length 6.
  std::vector<std::string> all{""};
  const std::string alphabet = "TIRF";
  for (int len = 1; len <= 6; ++len) {
    std::vector<std::string> next;
    for (const auto& prefix : all) {
      if (static_cast<int>(prefix.size()) != len - 1) {
        next.push_back(prefix);
        continue;
      }
      for (char c : alphabet) next.push_back(prefix + c);
    }
    all = std::move(next);
  }
  int accepted = 0;
  for (const auto& letters : all) {
    auto t = parse_trace(raw_from_letters(letters));
    REQUIRE(letters_of(t) == letters);  // fixture builds what it claims
    bool got = validate_format(t);
    bool want = grammar_oracle(letters);
    CAPTURE(letters);
    CHECK(got == want);
    accepted += want ? 1 : 0;
  }
  CHECK(accepted > 0);
}

TEST_CASE("validate requires fenced SQL and nonempty statements") {
  CHECK_FALSE(validate_format(
      parse_trace("<think>a</think><final_sql>SELECT 1</final_sql>")));
  CHECK_FALSE(validate_format(
      parse_trace("<think>a</think><final_sql>```sql   ```</final_sql>")));
  CHECK_FALSE(validate_format(parse_trace(
      "<think>a</think><final_sql>```sql SELECT 1``` trailing prose</final_sql>")));
  CHECK_FALSE(validate_format(parse_trace(
      "<think>a</think><final_sql>```sqlite SELECT 1```</final_sql>")));
  CHECK(validate_format(parse_trace(
      "<think>a</think><final_sql>The final SQL query is: ```sql\nSELECT 1\n"
      "```</final_sql>")));
}

TEST_CASE("whitespace gaps are layout, non-whitespace gaps are violations") {
  CHECK(validate_format(parse_trace(
      "<think>a</think>\n\n<final_sql>```sql SELECT 1```</final_sql>\n")));
  CHECK_FALSE(validate_format(parse_trace(
      "<think>a</think>junk<final_sql>```sql SELECT 1```</final_sql>")));
  // Budget truncation mid-block leaves a trailing untagged run.
  CHECK_FALSE(validate_format(parse_trace(
      "<think>a</think><final_sql>```sql SELECT 1```</final_sql><think>trunc")));
}

TEST_CASE("valid format implies a final SQL is extractable") {
  std::mt19937 rng(11);
  const std::string alphabet = "TIRF";
  for (int iter = 0; iter < 300; ++iter) {
    std::string letters;
    int n = static_cast<int>(rng() % 7);
    for (int i = 0; i < n; ++i) letters += alphabet[rng() % 4];
    auto t = parse_trace(raw_from_letters(letters));
    if (validate_format(t)) {
      REQUIRE(t.final_sql.has_value());
      REQUIRE_FALSE(t.final_sql->empty());
    }
  }
}

TEST_CASE("extract_sql handles the fenced forms") {
  CHECK(extract_sql("The final SQL query is: ```sql SELECT 1 ```") == "SELECT 1");
  CHECK(extract_sql("```sql\nSELECT a\nFROM t\n```") == "SELECT a\nFROM t");
  CHECK(extract_sql("prefix ```sql\nSELECT 9;\n''' suffix") == "SELECT 9;");
  SUBCASE("lenient fallback without a fence") {
    CHECK(extract_sql("SELECT 2") == "SELECT 2");
    CHECK(extract_sql("  SELECT 2  \n") == "SELECT 2");
  }
  SUBCASE("unterminated fence runs to end of block") {
    CHECK(extract_sql("```sql SELECT 5") == "SELECT 5");
  }
  SUBCASE("empty statements throw") {
    CHECK_THROWS_AS(extract_sql("```sql   ```"), EmptySqlError);
    CHECK_THROWS_AS(extract_sql("   "), EmptySqlError);
    CHECK_THROWS_AS(extract_sql(""), EmptySqlError);
  }
}

TEST_CASE("final_sql uses the first well-formed final block") {
  auto t = parse_trace(
      "<final_sql>```sql SELECT 1```</final_sql>"
      "<final_sql>```sql SELECT 2```</final_sql>");
  CHECK(t.final_sql == "SELECT 1");
  // An empty first block defers to the next one.
  auto t2 = parse_trace(
      "<final_sql>```sql ```</final_sql><final_sql>```sql SELECT 2```</final_sql>");
  CHECK(t2.final_sql == "SELECT 2");
}

TEST_CASE("transcript shaped like a real interaction validates") {
  // Paper-style two-phase transcript, apostrophe fence close included.
  const std::string raw =
      "<think>\nLet's check the averages first.\n</think>\n"
      "<intermediate_sql>\nThe intermediate SQL query for verification is: "
      "```sql\nSELECT AVG(a12) AS avg_1995, AVG(a13) AS avg_1996 FROM district;'''\n"
      "</intermediate_sql>\n"
      "<result>\n|avg_1995|avg_1996|\n|3.0723684210526314|3.787012987012987|\n</result>\n"
      "<think>\n1996 is higher.\n</think>\n"
      "<final_sql>\nThe final SQL query is: ```sql\nSELECT '1996';'''\n</final_sql>";
  auto t = parse_trace(raw);
  CHECK(validate_format(t));
  CHECK(t.interaction_count == 1);
  CHECK(t.final_sql == "SELECT '1996';");
  CHECK(reconstruct(t) == raw);
}
