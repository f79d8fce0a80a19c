#include "huddle/llm/mock_provider.hpp"

#include <fstream>

#include "huddle/common/error.hpp"
#include "huddle/llm/directive.hpp"

namespace huddle::llm {

namespace {

std::string render_response(const nlohmann::json& response) {
  if (response.contains("error")) {
    const auto& e = response["error"];
    throw ProviderError(e.value("retryable", true), e.value("code", "mock"), "scripted failure");
  }
  if (response.contains("raw")) return response["raw"].get<std::string>();
  std::string out = response.value("reply", "");
  if (response.contains("directive")) {
    AgentDirective d;
    const auto& dj = response["directive"];
    d.kind = dj.at("kind").get<DirectiveKind>();
    d.text = dj.value("text", "");
    if (dj.contains("target") && !dj["target"].is_null()) d.target = dj["target"].get<std::string>();
    d.source = dj.value("source", "agent");
    out += "\n\n" + format_directive_block(d);
  }
  return out;
}

}  // namespace

ScriptedMockProvider::ScriptedMockProvider(const nlohmann::json& script) : script_(script) {
  if (!script.is_object()) fail(ErrorCode::validation, "mock script must be a JSON object");
  if (script.contains("entries")) {
    if (!script["entries"].is_array()) fail(ErrorCode::validation, "mock script: entries must be an array");
    for (const auto& raw : script["entries"]) {
      Entry e;
      e.template_id = raw.value("template", "*");
      if (raw.contains("turn")) e.turn = raw["turn"].get<int>();
      if (raw.contains("match")) {
        e.match_source = raw["match"].get<std::string>();
        try {
          e.match = std::regex(*e.match_source, std::regex::ECMAScript | std::regex::icase);
        } catch (const std::regex_error&) {
          fail(ErrorCode::validation, "mock script: bad match regex " + *e.match_source);
        }
      }
      e.response = raw;
      entries_.push_back(std::move(e));
    }
  }
  default_ = script.value("default", nlohmann::json{{"reply", "I see. Could you tell me a bit more?"}});
}

ScriptedMockProvider ScriptedMockProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, "cannot open mock script " + path.string(), "llm.script");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::config, "mock script is not valid JSON: " + path.string(), "llm.script");
  return ScriptedMockProvider(j);
}

std::string ScriptedMockProvider::send(const ProviderRequest& request) {
  int user_turns = 0;
  const std::string* last_user = nullptr;
  for (const auto& m : request.messages)
    if (m.role == "user") {
      ++user_turns;
      last_user = &m.content;
    }
  const int turn = user_turns - 1;
  for (const auto& e : entries_) {
    if (e.template_id != "*" && e.template_id != request.template_id) continue;
    if (e.turn && *e.turn != turn) continue;
    if (e.match && (!last_user || !std::regex_search(*last_user, *e.match))) continue;
    return render_response(e.response);
  }
  return render_response(default_);
}

}  // namespace huddle::llm
