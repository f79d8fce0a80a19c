#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/llm/templates.hpp"
#include "huddle/service/core.hpp"

namespace huddle::service {

/// Scenario file:
///   {
///     "name": "...",
///     "start_ms": 1700000000000,            optional wall clock origin
///     "mock_script": {...} | "mock_script_file": "path",
///     "crash_after_event": 25,              optional; default half way
///     "teams": [{
///       "name": "...", "members": ["Ada", ...],
///       "meetings": [{
///         "condition": "CONTROL" | "TREATMENT",
///         "duration_ms": 600000,
///         "events": [{"user": "Ada", "kind": "JOIN", "ts_ms": 0}, ...],
///         "pre_meeting": {"Ada": ["user message", ...]},     TREATMENT only
///         "post_meeting": {"Ada": ["user message", ...]},
///         "approve_drafts": true
///       }]
///     }]
///   }
/// Users are referred to by display name.
struct ScenarioMeeting {
  Condition condition = Condition::control;
  std::int64_t duration_ms = 0;
  struct Event {
    std::string user;
    std::string kind;
    std::int64_t ts_ms = 0;
  };
  std::vector<Event> events;
  std::map<std::string, std::vector<std::string>> pre_meeting;
  std::map<std::string, std::vector<std::string>> post_meeting;
  bool approve_drafts = true;
};

struct ScenarioTeam {
  std::string name;
  std::vector<std::string> members;
  std::vector<ScenarioMeeting> meetings;
};

struct Scenario {
  std::string name;
  std::int64_t start_ms = 1'700'000'000'000;
  nlohmann::json mock_script;
  std::optional<std::int64_t> crash_after_event;
  std::vector<ScenarioTeam> teams;
};

/// Validation errors carry the offending JSON path as detail.
Scenario parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

struct Check {
  Check() = default;
  explicit Check(std::string n) : name(std::move(n)) {}

  std::string name;
  bool ok = true;
  std::vector<std::string> failures;
};

/// Protocol invariants over a finished (or partial) run.
std::vector<Check> check_protocol(const Core& core, const llm::TemplateRegistry& templates);

struct ReplayOptions {
  std::filesystem::path work_dir;  // empty: a fresh temporary directory, removed afterwards
  int snapshot_every = 10;
};

struct ReplayOutcome {
  bool ok = false;
  nlohmann::json report;
};

ReplayOutcome replay_study(const Scenario& scenario, const ReplayOptions& options = {});

}  // namespace huddle::service
