#include "huddle/llm/directive.hpp"

#include <algorithm>
#include <cctype>

namespace huddle::llm {

namespace {

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Offset of the last "```directive" opener (spaces allowed after the fence).
std::string::size_type find_last_opener(const std::string& lowered, std::size_t& content_start) {
  auto pos = lowered.rfind("```");
  while (pos != std::string::npos) {
    std::size_t i = pos + 3;
    while (i < lowered.size() && (lowered[i] == ' ' || lowered[i] == '\t')) ++i;
    if (lowered.compare(i, 9, "directive") == 0) {
      content_start = i + 9;
      return pos;
    }
    if (pos == 0) break;
    pos = lowered.rfind("```", pos - 1);
  }
  return std::string::npos;
}

bool fill_from_json(const nlohmann::json& j, AgentDirective& d) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) return false;
  const auto kind = j["kind"].get<std::string>();
  static const std::pair<const char*, DirectiveKind> kinds[] = {
      {"NONE", DirectiveKind::none},
      {"DRAFT_FEEDBACK", DirectiveKind::draft_feedback},
      {"PROPOSE_GOAL", DirectiveKind::propose_goal},
      {"DRAFT_REFLECTION", DirectiveKind::draft_reflection},
      {"MARK_COMPLETE", DirectiveKind::mark_complete},
  };
  auto it = std::find_if(std::begin(kinds), std::end(kinds), [&](auto& k) { return kind == k.first; });
  if (it == std::end(kinds)) return false;
  d.kind = it->second;

  const bool needs_text = d.kind == DirectiveKind::draft_feedback || d.kind == DirectiveKind::propose_goal ||
                          d.kind == DirectiveKind::draft_reflection;
  if (needs_text) {
    if (!j.contains("text") || !j["text"].is_string()) return false;
    d.text = trim(j["text"].get<std::string>());
    if (d.text.empty()) return false;
  }
  if (d.kind == DirectiveKind::draft_feedback && j.contains("target") && !j["target"].is_null()) {
    if (!j["target"].is_string()) return false;
    auto target = trim(j["target"].get<std::string>());
    if (!target.empty()) d.target = target;
  }
  if (d.kind == DirectiveKind::propose_goal && j.contains("source")) {
    if (!j["source"].is_string()) return false;
    d.source = lower(j["source"].get<std::string>());
    if (d.source != "agent" && d.source != "user") return false;
  }
  return true;
}

}  // namespace

AgentDirective parse_agent_output(std::string_view raw) {
  const std::string text(raw);
  const std::string lowered = lower(text);
  AgentDirective out;

  std::size_t content_start = 0;
  const auto opener = find_last_opener(lowered, content_start);
  if (opener == std::string::npos) {
    out.reply_text = trim(text);
    out.parse_warning = true;
    return out;
  }
  const auto closer = text.find("```", content_start);
  if (closer == std::string::npos) {
    out.reply_text = trim(text.substr(0, opener));
    out.parse_warning = true;
    return out;
  }
  out.reply_text = trim(text.substr(0, opener) + text.substr(closer + 3));

  const auto body = trim(std::string_view(text).substr(content_start, closer - content_start));
  auto parsed = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  AgentDirective directive;
  if (parsed.is_discarded() || !fill_from_json(parsed, directive)) {
    out.parse_warning = true;
    return out;
  }
  directive.reply_text = std::move(out.reply_text);
  return directive;
}

std::string format_directive_block(const AgentDirective& d) {
  nlohmann::json j = {{"kind", d.kind}};
  if (!d.text.empty()) j["text"] = d.text;
  if (d.target) j["target"] = *d.target;
  if (d.kind == DirectiveKind::propose_goal) j["source"] = d.source;
  return "```directive\n" + j.dump() + "\n```";
}

void to_json(nlohmann::json& j, const AgentDirective& d) {
  j = {{"kind", d.kind},
       {"reply_text", d.reply_text},
       {"text", d.text},
       {"target", d.target ? nlohmann::json(*d.target) : nlohmann::json(nullptr)},
       {"source", d.source},
       {"parse_warning", d.parse_warning}};
}

void from_json(const nlohmann::json& j, AgentDirective& d) {
  d.kind = j.at("kind").get<DirectiveKind>();
  d.reply_text = j.value("reply_text", "");
  d.text = j.value("text", "");
  if (j.contains("target") && !j["target"].is_null())
    d.target = j["target"].get<std::string>();
  else
    d.target.reset();
  d.source = j.value("source", "agent");
  d.parse_warning = j.value("parse_warning", false);
}

}  // namespace huddle::llm
