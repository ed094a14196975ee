#pragma once

#include <string>
#include <string_view>

namespace sqlrl::prompt {

// The three system prompts shipped with the artifact. ExecutionAware drives
// the interactive rollout; StandardReasoning is the no-feedback baseline;
// DirectOutput asks for the SQL with no reasoning at all.
enum class Style { ExecutionAware, StandardReasoning, DirectOutput };

std::string_view style_name(Style style);

// Raw template with {database_schema}, {matched_contents}, {question},
// {evidence} placeholders intact. Identical to the bundled asset file.
std::string_view template_text(Style style);

// Fills the four placeholders. An absent hint renders as an empty string.
std::string assemble(Style style, std::string_view database_schema,
                     std::string_view matched_contents, std::string_view question,
                     std::string_view evidence);

}  // namespace sqlrl::prompt
