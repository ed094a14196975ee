#include "sqlrl/prompt.hpp"

namespace sqlrl::prompt {

namespace {

// Shared preamble and footer; the guidelines and response format vary by
// style. Placeholders are substituted verbatim, so the braces below are the
// wire format.
constexpr std::string_view kExecutionAware =
    R"(You are an experienced database expert. Now you need to generate a SQL query given the database information, a question, and some additional information. Your goal is to generate a single **SQLite** query that can correctly answer the user's question based on the given schema and matched values.
---

**Important Guidelines:**
1. The database structure is defined by the following table schemas:
   **table_name.column_name ( data_type | comment : description | values : values )**
   The "values" are only examples to illustrate the data type and format; They are not directly related to the question.
2. You should:
   2.1. **Analyze** the question intent and map it to relevant tables and columns.
   2.2. If the question is complex or ambiguous, you may write an **intermediate SQL** for verification.
   2.3. **Do not generate an infinite number of intermediate SQLs**. Instead, focus on identifying key areas where the SQL might need improvement and stop when you have sufficient insight.
   2.4. When reflecting on the intermediate SQL:
   - First, check whether it **correctly expresses all conditions, columns, and logic** described in the original question.
   - Also, verify whether it follows the Database admin instructions, such as avoiding prohibited patterns or optimizing structure.
   - Then, evaluate whether the **execution result** confirms or contradicts your expectations.
   - If there is any mismatch, misunderstanding, violation of admin rules, or missing condition, **revise your reasoning before generating the final SQL**.
   - In addition, you can generate other possible intermediate SQLs for comparison.
---

**Response Format:**
Respond strictly in the following format:
<think> Reasoning process here. </think>
<intermediate_sql> The intermediate SQL query for verification is: ```sql
your intermediate SQL here.'''</intermediate_sql>
<result> Execution result here. </result>
<think> Further reasoning. </think>
<final_sql> The final SQL query is: ```sql your final SQL here. '''</final_sql>
---
**[Table creation statements]** {database_schema}
**[Matched Values]** {matched_contents}
**[Question]** {question}  Hint: {evidence}
)";

constexpr std::string_view kStandardReasoning =
    R"(You are an experienced database expert. Now you need to generate a SQL query given the database information, a question, and some additional information. Your goal is to generate a single **SQLite** query that can correctly answer the user's question based on the given schema and matched values.
---

**Important Guidelines:**
1. The database structure is defined by the following table schemas:
   **table_name.column_name ( data_type | comment : description | values : values )**
   The "values" are only examples to illustrate the data type and format; They are not directly related to the question.
2. **Analyze** the question intent and map it to relevant tables and columns.
3. First, check whether it **correctly expresses all conditions, columns, and logic** described in the original question.
4. Also, verify whether it follows the Database admin instructions, such as avoiding prohibited patterns or optimizing structure.
---

**Response Format:**
Respond strictly in the following format:
<think> Reasoning process here. </think>
<final_sql> The final SQL query is: ```sql your final SQL here. '''</final_sql>
---
**[Table creation statements]** {database_schema}
**[Matched Values]** {matched_contents}
**[Question]** {question}  Hint: {evidence}
)";

constexpr std::string_view kDirectOutput =
    R"(You are an experienced database expert. Now you need to generate a SQL query given the database information, a question, and some additional information. Your goal is to generate a single **SQLite** query that can correctly answer the user's question based on the given schema and matched values.
---
**Important Guidelines:**
1. The database structure is defined by the following table schemas:
   **table_name.column_name ( data_type | comment : description | values : values )**
   The "values" are only examples to illustrate the data type and format; They are not directly related to the question.
2. Your task is to generate the correct SQL query **only**. Do not include any explanation, reasoning, or additional text.
---

**Response Format:**
Respond strictly in the following format:
<final_sql> The final SQL query is: ```sql your final SQL here. '''</final_sql>
---
**[Table creation statements]** {database_schema}
**[Matched Values]** {matched_contents}
**[Question]** {question}  Hint: {evidence}
)";

void substitute(std::string& text, std::string_view placeholder, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(placeholder, pos)) != std::string::npos) {
    text.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::string_view style_name(Style style) {
  switch (style) {
    case Style::ExecutionAware: return "execution-aware";
    case Style::StandardReasoning: return "standard-reasoning";
    case Style::DirectOutput: return "direct-output";
  }
  return "unknown";
}

std::string_view template_text(Style style) {
  switch (style) {
    case Style::ExecutionAware: return kExecutionAware;
    case Style::StandardReasoning: return kStandardReasoning;
    case Style::DirectOutput: return kDirectOutput;
  }
  return {};
}

std::string assemble(Style style, std::string_view database_schema,
                     std::string_view matched_contents, std::string_view question,
                     std::string_view evidence) {
  std::string text(template_text(style));
  substitute(text, "{database_schema}", database_schema);
  substitute(text, "{matched_contents}", matched_contents);
  substitute(text, "{question}", question);
  substitute(text, "{evidence}", evidence);
  return text;
}

}  // namespace sqlrl::prompt
