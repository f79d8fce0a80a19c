#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace huddle {

/// Opaque string identifier, tagged so ids of different entities never mix.
template <class Tag>
struct Id {
  std::string value;

  Id() = default;
  explicit Id(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  auto operator<=>(const Id&) const = default;
};

template <class Tag>
void to_json(nlohmann::json& j, const Id<Tag>& id) { j = id.value; }

template <class Tag>
void from_json(const nlohmann::json& j, Id<Tag>& id) { id.value = j.get<std::string>(); }

using UserId = Id<struct UserTag>;
using TeamId = Id<struct TeamTag>;
using MeetingId = Id<struct MeetingTag>;
using SessionId = Id<struct SessionTag>;
using DraftId = Id<struct DraftTag>;
using GoalId = Id<struct GoalTag>;
using ReflectionId = Id<struct ReflectionTag>;
using RecordId = Id<struct RecordTag>;

// Deterministic id allocation: the same command sequence always yields the
// same ids, which is what makes event-log replay reproduce state exactly.
class IdSource {
 public:
  std::string next(const std::string& prefix) {
    return prefix + "-" + std::to_string(++counters_[prefix]);
  }

  template <class IdT>
  IdT next_id(const std::string& prefix) { return IdT{next(prefix)}; }

  friend void to_json(nlohmann::json& j, const IdSource& s) { j = s.counters_; }
  friend void from_json(const nlohmann::json& j, IdSource& s) {
    s.counters_ = j.get<std::map<std::string, std::uint64_t>>();
  }

 private:
  std::map<std::string, std::uint64_t> counters_;
};

}  // namespace huddle

template <class Tag>
struct std::hash<huddle::Id<Tag>> {
  std::size_t operator()(const huddle::Id<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.value);
  }
};
