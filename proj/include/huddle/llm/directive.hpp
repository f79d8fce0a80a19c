#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace huddle::llm {

enum class DirectiveKind { none, draft_feedback, propose_goal, draft_reflection, mark_complete };

NLOHMANN_JSON_SERIALIZE_ENUM(DirectiveKind, {
    {DirectiveKind::none, "NONE"},
    {DirectiveKind::draft_feedback, "DRAFT_FEEDBACK"},
    {DirectiveKind::propose_goal, "PROPOSE_GOAL"},
    {DirectiveKind::draft_reflection, "DRAFT_REFLECTION"},
    {DirectiveKind::mark_complete, "MARK_COMPLETE"},
})

/// What the model asked the engine to do, next to the prose shown to the user.
/// Whether the kind is legal for the session's state is the engine's call.
struct AgentDirective {
  DirectiveKind kind = DirectiveKind::none;
  std::string reply_text;
  std::string text;                   // draft, goal or reflection text
  std::optional<std::string> target;  // DRAFT_FEEDBACK: "everyone" or a teammate's name
  std::string source = "agent";       // PROPOSE_GOAL: "agent" or "user"
  bool parse_warning = false;         // no well-formed directive block was found
};

void to_json(nlohmann::json& j, const AgentDirective& d);
void from_json(const nlohmann::json& j, AgentDirective& d);

/// Splits a model reply into prose and the last fenced ```directive block.
/// Anything malformed degrades to kind NONE with parse_warning set.
AgentDirective parse_agent_output(std::string_view raw);

/// The fenced block a model is expected to append, e.g. for scripted replies.
std::string format_directive_block(const AgentDirective& directive);

}  // namespace huddle::llm
