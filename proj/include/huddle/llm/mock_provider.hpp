#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/llm/provider.hpp"

namespace huddle::llm {

/// Deterministic, network-free provider driven by a script table.
///
/// Script file (JSON):
///   {
///     "entries": [
///       {"template": "ihp.goal_elicitation", "turn": 1, "match": "speak",
///        "reply": "How about this?", "directive": {"kind": "PROPOSE_GOAL", "text": "..."}},
///       {"template": "*", "raw": "verbatim model output"},
///       {"template": "solicitation.probing", "error": {"retryable": true, "code": "503"}}
///     ],
///     "default": {"reply": "Tell me more."}
///   }
///
/// `turn` is the 0-based index of the latest user message in the
/// conversation; `match` is an ECMAScript regex searched (case-insensitive) in
/// that message. Omitted keys match anything. The first matching entry wins.
class ScriptedMockProvider : public ChatProvider {
 public:
  struct Entry {
    std::string template_id = "*";
    std::optional<int> turn;
    std::optional<std::string> match_source;
    std::optional<std::regex> match;
    nlohmann::json response;  // the entry itself minus the selectors
  };

  explicit ScriptedMockProvider(const nlohmann::json& script);
  static ScriptedMockProvider from_file(const std::filesystem::path& path);

  std::string send(const ProviderRequest& request) override;

  const nlohmann::json& script() const noexcept { return script_; }

 private:
  nlohmann::json script_;
  std::vector<Entry> entries_;
  nlohmann::json default_;
};

}  // namespace huddle::llm
