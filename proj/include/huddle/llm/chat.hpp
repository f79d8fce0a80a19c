#pragma once

#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace huddle::llm {

enum class Role { system, agent, user };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {
    {Role::system, "system"},
    {Role::agent, "agent"},
    {Role::user, "user"},
})

struct ChatTurn {
  Role role = Role::user;
  std::string text;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ChatTurn, role, text)

using Bindings = std::map<std::string, std::string>;

}  // namespace huddle::llm
