#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/common/domain.hpp"
#include "huddle/common/ids.hpp"
#include "huddle/common/json_optional.hpp"
#include "huddle/router/router.hpp"

namespace huddle::orchestrator {

struct User {
  UserId user_id;
  std::string display_name;
  TeamId team_id;
};

struct Team {
  TeamId team_id;
  std::string name;
  std::vector<UserId> member_ids;
};

struct Meeting {
  MeetingId meeting_id;
  TeamId team_id;
  Condition condition = Condition::control;
  MeetingState state = MeetingState::scheduled;
  int cycle_index = 0;
  std::optional<std::int64_t> opened_at;
  std::optional<std::int64_t> closed_at;
};

enum class Phase { pre_meeting, in_meeting, post_meeting };

NLOHMANN_JSON_SERIALIZE_ENUM(Phase, {
    {Phase::pre_meeting, "PRE_MEETING"},
    {Phase::in_meeting, "IN_MEETING"},
    {Phase::post_meeting, "POST_MEETING"},
})

struct PhaseStep {
  Phase phase = Phase::pre_meeting;
  bool completed = false;
};

struct PhaseState {
  UserId user_id;
  MeetingId meeting_id;
  Phase phase = Phase::pre_meeting;
  bool completed = false;
  std::vector<PhaseStep> history;  // phases left behind, in order
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(User, user_id, display_name, team_id)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Team, team_id, name, member_ids)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Meeting, meeting_id, team_id, condition, state, cycle_index, opened_at, closed_at)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PhaseStep, phase, completed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PhaseState, user_id, meeting_id, phase, completed, history)

class Orchestrator {
 public:
  const Team& create_team(const std::string& name, const std::vector<std::string>& member_names);
  const Meeting& schedule_meeting(const TeamId& team, Condition condition, int cycle_index);
  const Meeting& open_meeting(const MeetingId& id, std::int64_t now_ms);
  const Meeting& close_meeting(const MeetingId& id, std::int64_t now_ms);

  /// CONTROL meetings: the user read the static pre-meeting message.
  const PhaseState& acknowledge_control(const UserId& user, const MeetingId& meeting);
  /// TREATMENT meetings: the user's goal-setting conversation finished.
  const PhaseState& complete_pre_meeting(const UserId& user, const MeetingId& meeting);

  /// Moves the user to the next phase, or completes POST_MEETING once
  /// `post_conversation_complete` holds. Errors name the pending phase.
  const PhaseState& advance_phase(const UserId& user, const MeetingId& meeting, bool post_conversation_complete);

  const Team& team(const TeamId& id) const;
  const User& user(const UserId& id) const;
  const Meeting& meeting(const MeetingId& id) const;
  PhaseState phase(const UserId& user, const MeetingId& meeting) const;
  Roster roster(const TeamId& team) const;
  router::MeetingRef ref(const MeetingId& meeting) const;
  const Meeting* previous(const Meeting& m) const;
  std::vector<const Meeting*> meetings_of(const TeamId& team) const;

  const std::map<TeamId, Team>& teams() const { return teams_; }
  const std::map<MeetingId, Meeting>& meetings() const { return meetings_; }
  const std::map<UserId, User>& users() const { return users_; }

  friend void to_json(nlohmann::json& j, const Orchestrator& o);
  friend void from_json(const nlohmann::json& j, Orchestrator& o);

 private:
  Meeting& meeting_mut(const MeetingId& id);
  PhaseState& phase_mut(const UserId& user, const MeetingId& meeting);

  IdSource ids_;
  std::map<TeamId, Team> teams_;
  std::map<UserId, User> users_;
  std::map<MeetingId, Meeting> meetings_;
  std::map<std::pair<UserId, MeetingId>, PhaseState> phases_;
};

}  // namespace huddle::orchestrator
