#include "huddle/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <set>

#include "huddle/common/error.hpp"

namespace huddle::orchestrator {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string phase_name(Phase p) { return nlohmann::json(p).get<std::string>(); }

}  // namespace

const Team& Orchestrator::create_team(const std::string& name, const std::vector<std::string>& member_names) {
  if (trim(name).empty()) fail(ErrorCode::validation, "team name is empty");
  if (member_names.size() < 2) fail(ErrorCode::validation, "a team needs at least 2 members");
  std::set<std::string> seen;
  for (const auto& raw : member_names) {
    const auto n = trim(raw);
    if (n.empty()) fail(ErrorCode::validation, "member names must be non-empty");
    if (!seen.insert(n).second) fail(ErrorCode::validation, "duplicate member name", n);
  }

  Team team{ids_.next_id<TeamId>("team"), trim(name), {}};
  for (const auto& raw : member_names) {
    User u{ids_.next_id<UserId>("user"), trim(raw), team.team_id};
    team.member_ids.push_back(u.user_id);
    users_.emplace(u.user_id, std::move(u));
  }
  auto id = team.team_id;
  return teams_.emplace(id, std::move(team)).first->second;
}

const Meeting& Orchestrator::schedule_meeting(const TeamId& team_id, Condition condition, int cycle_index) {
  if (!teams_.contains(team_id)) fail(ErrorCode::not_found, "unknown team", team_id.value);
  if (cycle_index < 0) fail(ErrorCode::validation, "cycle_index must be non-negative");
  const auto existing = meetings_of(team_id);
  for (const auto* m : existing)
    if (m->cycle_index == cycle_index)
      fail(ErrorCode::conflict, "team already has a meeting at cycle " + std::to_string(cycle_index));
  const int next = static_cast<int>(existing.size());
  if (cycle_index != next)
    fail(ErrorCode::validation, "cycles must be scheduled without gaps; next is " + std::to_string(next));

  Meeting m{ids_.next_id<MeetingId>("meeting"), team_id, condition, MeetingState::scheduled, cycle_index, {}, {}};
  auto id = m.meeting_id;
  return meetings_.emplace(id, std::move(m)).first->second;
}

const Meeting& Orchestrator::open_meeting(const MeetingId& id, std::int64_t now_ms) {
  auto& m = meeting_mut(id);
  if (m.state != MeetingState::scheduled)
    fail(ErrorCode::state, "meeting is " + nlohmann::json(m.state).get<std::string>() + ", not SCHEDULED");
  if (const auto* prev = previous(m); prev && prev->state != MeetingState::closed)
    fail(ErrorCode::state, "the team's previous meeting has not closed", prev->meeting_id.value);
  m.state = MeetingState::open;
  m.opened_at = now_ms;
  return m;
}

const Meeting& Orchestrator::close_meeting(const MeetingId& id, std::int64_t now_ms) {
  auto& m = meeting_mut(id);
  if (m.state != MeetingState::open)
    fail(ErrorCode::state, "meeting is " + nlohmann::json(m.state).get<std::string>() + ", not OPEN");
  m.state = MeetingState::closed;
  m.closed_at = std::max(now_ms, *m.opened_at);
  return m;
}

const PhaseState& Orchestrator::acknowledge_control(const UserId& user_id, const MeetingId& meeting_id) {
  const auto& m = meeting(meeting_id);
  if (m.condition != Condition::control)
    fail(ErrorCode::state, "only control meetings have a pre-meeting message to acknowledge");
  return complete_pre_meeting(user_id, meeting_id);
}

const PhaseState& Orchestrator::complete_pre_meeting(const UserId& user_id, const MeetingId& meeting_id) {
  const auto& m = meeting(meeting_id);
  if (m.state == MeetingState::closed) fail(ErrorCode::state, "meeting has already closed");
  auto p = phase(user_id, meeting_id);
  if (p.phase != Phase::pre_meeting) fail(ErrorCode::state, "user is already past PRE_MEETING");
  if (p.completed) fail(ErrorCode::state, "PRE_MEETING is already complete");
  p.completed = true;
  return phase_mut(user_id, meeting_id) = p;
}

const PhaseState& Orchestrator::advance_phase(const UserId& user_id, const MeetingId& meeting_id,
                                              bool post_conversation_complete) {
  const auto& m = meeting(meeting_id);
  // Work on a copy so a refusal leaves no phase record behind.
  auto p = phase(user_id, meeting_id);
  auto commit = [&]() -> const PhaseState& { return phase_mut(user_id, meeting_id) = p; };
  auto leave = [&](Phase next) {
    p.history.push_back({p.phase, p.completed});
    p.phase = next;
    p.completed = false;
  };

  switch (p.phase) {
    case Phase::pre_meeting:
      if (m.state == MeetingState::scheduled) {
        if (!p.completed)
          fail(ErrorCode::state,
               std::string("pending PRE_MEETING: ") +
                   (m.condition == Condition::control ? "acknowledge the pre-meeting message"
                                                      : "finish the goal-setting conversation"),
               "PRE_MEETING");
        fail(ErrorCode::state, "pending IN_MEETING: the meeting has not opened yet", "IN_MEETING");
      }
      leave(Phase::in_meeting);
      if (m.state == MeetingState::closed) {
        // Never advanced while the meeting ran; record the gap and move on.
        leave(Phase::post_meeting);
      }
      return commit();
    case Phase::in_meeting:
      if (m.state != MeetingState::closed)
        fail(ErrorCode::state, "pending IN_MEETING: the meeting has not closed yet", "IN_MEETING");
      p.completed = true;
      leave(Phase::post_meeting);
      return commit();
    case Phase::post_meeting:
      if (p.completed) fail(ErrorCode::state, "all phases are complete for this meeting");
      if (!post_conversation_complete)
        fail(ErrorCode::state, "pending POST_MEETING: finish the feedback conversation", "POST_MEETING");
      p.completed = true;
      return commit();
  }
  fail(ErrorCode::state, "unknown phase " + phase_name(p.phase));
}

const Team& Orchestrator::team(const TeamId& id) const {
  auto it = teams_.find(id);
  if (it == teams_.end()) fail(ErrorCode::not_found, "unknown team", id.value);
  return it->second;
}

const User& Orchestrator::user(const UserId& id) const {
  auto it = users_.find(id);
  if (it == users_.end()) fail(ErrorCode::not_found, "unknown user", id.value);
  return it->second;
}

const Meeting& Orchestrator::meeting(const MeetingId& id) const {
  auto it = meetings_.find(id);
  if (it == meetings_.end()) fail(ErrorCode::not_found, "unknown meeting", id.value);
  return it->second;
}

Meeting& Orchestrator::meeting_mut(const MeetingId& id) {
  auto it = meetings_.find(id);
  if (it == meetings_.end()) fail(ErrorCode::not_found, "unknown meeting", id.value);
  return it->second;
}

PhaseState& Orchestrator::phase_mut(const UserId& user_id, const MeetingId& meeting_id) {
  const auto& u = user(user_id);
  const auto& m = meeting(meeting_id);
  if (u.team_id != m.team_id) fail(ErrorCode::authorization, "user is not on the meeting's team", user_id.value);
  auto key = std::make_pair(user_id, meeting_id);
  auto it = phases_.find(key);
  if (it == phases_.end()) it = phases_.emplace(key, PhaseState{user_id, meeting_id, {}, false, {}}).first;
  return it->second;
}

PhaseState Orchestrator::phase(const UserId& user_id, const MeetingId& meeting_id) const {
  const auto& u = user(user_id);
  const auto& m = meeting(meeting_id);
  if (u.team_id != m.team_id) fail(ErrorCode::authorization, "user is not on the meeting's team", user_id.value);
  auto it = phases_.find({user_id, meeting_id});
  return it == phases_.end() ? PhaseState{user_id, meeting_id, {}, false, {}} : it->second;
}

Roster Orchestrator::roster(const TeamId& team_id) const {
  const auto& t = team(team_id);
  Roster r{t.team_id, {}};
  for (const auto& id : t.member_ids) r.members.push_back({id, users_.at(id).display_name});
  return r;
}

router::MeetingRef Orchestrator::ref(const MeetingId& id) const {
  const auto& m = meeting(id);
  return {m.meeting_id, m.team_id, m.cycle_index};
}

const Meeting* Orchestrator::previous(const Meeting& m) const {
  for (const auto& [id, other] : meetings_)
    if (other.team_id == m.team_id && other.cycle_index == m.cycle_index - 1) return &other;
  return nullptr;
}

std::vector<const Meeting*> Orchestrator::meetings_of(const TeamId& team_id) const {
  std::vector<const Meeting*> out;
  for (const auto& [id, m] : meetings_)
    if (m.team_id == team_id) out.push_back(&m);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->cycle_index < b->cycle_index; });
  return out;
}

void to_json(nlohmann::json& j, const Orchestrator& o) {
  j = {{"ids", o.ids_},
       {"teams", nlohmann::json::array()},
       {"users", nlohmann::json::array()},
       {"meetings", nlohmann::json::array()},
       {"phases", nlohmann::json::array()}};
  for (const auto& [id, t] : o.teams_) j["teams"].push_back(t);
  for (const auto& [id, u] : o.users_) j["users"].push_back(u);
  for (const auto& [id, m] : o.meetings_) j["meetings"].push_back(m);
  for (const auto& [key, p] : o.phases_) j["phases"].push_back(p);
}

void from_json(const nlohmann::json& j, Orchestrator& o) {
  o.ids_ = j.at("ids").get<IdSource>();
  o.teams_.clear();
  o.users_.clear();
  o.meetings_.clear();
  o.phases_.clear();
  for (const auto& t : j.at("teams")) {
    auto team = t.get<Team>();
    auto id = team.team_id;
    o.teams_.emplace(id, std::move(team));
  }
  for (const auto& u : j.at("users")) {
    auto user = u.get<User>();
    auto id = user.user_id;
    o.users_.emplace(id, std::move(user));
  }
  for (const auto& m : j.at("meetings")) {
    auto meeting = m.get<Meeting>();
    auto id = meeting.meeting_id;
    o.meetings_.emplace(id, std::move(meeting));
  }
  for (const auto& p : j.at("phases")) {
    auto phase = p.get<PhaseState>();
    auto key = std::make_pair(phase.user_id, phase.meeting_id);
    o.phases_.emplace(std::move(key), std::move(phase));
  }
}

}  // namespace huddle::orchestrator
