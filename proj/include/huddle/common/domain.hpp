#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/common/ids.hpp"

namespace huddle {

enum class Condition { control, treatment };
enum class MeetingState { scheduled, open, closed };

NLOHMANN_JSON_SERIALIZE_ENUM(Condition, {
    {Condition::control, "CONTROL"},
    {Condition::treatment, "TREATMENT"},
})

NLOHMANN_JSON_SERIALIZE_ENUM(MeetingState, {
    {MeetingState::scheduled, "SCHEDULED"},
    {MeetingState::open, "OPEN"},
    {MeetingState::closed, "CLOSED"},
})

struct Member {
  UserId user_id;
  std::string display_name;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Member, user_id, display_name)

/// Team roster as seen by modules that must not reach into the orchestrator.
struct Roster {
  TeamId team_id;
  std::vector<Member> members;

  bool contains(const UserId& id) const {
    for (const auto& m : members)
      if (m.user_id == id) return true;
    return false;
  }

  const Member* find(const UserId& id) const {
    for (const auto& m : members)
      if (m.user_id == id) return &m;
    return nullptr;
  }
};

/// Parses an enum from its JSON spelling, raising a validation error instead
/// of nlohmann's silent fallback to the first enumerator.
template <class Enum>
Enum parse_enum(const nlohmann::json& j, const char* field);

}  // namespace huddle

#include "huddle/common/error.hpp"

namespace huddle {

template <class Enum>
Enum parse_enum(const nlohmann::json& j, const char* field) {
  if (!j.is_string()) fail(ErrorCode::validation, std::string(field) + " must be a string");
  Enum value = j.get<Enum>();
  nlohmann::json back = value;
  if (back != j)
    fail(ErrorCode::validation,
         std::string("unknown value for ") + field + ": " + j.get<std::string>());
  return value;
}

}  // namespace huddle
