#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/capture/capture.hpp"
#include "huddle/common/domain.hpp"
#include "huddle/common/ids.hpp"
#include "huddle/common/json_optional.hpp"
#include "huddle/llm/chat.hpp"
#include "huddle/llm/directive.hpp"
#include "huddle/llm/gateway.hpp"
#include "huddle/router/router.hpp"

namespace huddle::conversation {

enum class SessionKind { solicitation, ihp };

NLOHMANN_JSON_SERIALIZE_ENUM(SessionKind, {
    {SessionKind::solicitation, "SOLICITATION"},
    {SessionKind::ihp, "IHP"},
})

// Both protocols share one enum; which values a session may take depends on
// its kind (see states_of).
enum class State {
  init,
  probing,
  drafting,
  targeting,
  await_approval,
  present_feedback,
  goal_elicitation,
  await_adoption,
  transgression_elicitation,
  await_reflection_approval,
  complete,
};

NLOHMANN_JSON_SERIALIZE_ENUM(State, {
    {State::init, "INIT"},
    {State::probing, "PROBING"},
    {State::drafting, "DRAFTING"},
    {State::targeting, "TARGETING"},
    {State::await_approval, "AWAIT_APPROVAL"},
    {State::present_feedback, "PRESENT_FEEDBACK"},
    {State::goal_elicitation, "GOAL_ELICITATION"},
    {State::await_adoption, "AWAIT_ADOPTION"},
    {State::transgression_elicitation, "TRANSGRESSION_ELICITATION"},
    {State::await_reflection_approval, "AWAIT_REFLECTION_APPROVAL"},
    {State::complete, "COMPLETE"},
})

std::string to_string(State s);
const std::vector<State>& states_of(SessionKind kind);

enum class DraftStatus { draft, approved, discarded };
enum class GoalStatus { proposed, adopted };
enum class GoalSource { agent_proposed, user_stated };
enum class ReflectionStatus { draft, approved };

NLOHMANN_JSON_SERIALIZE_ENUM(DraftStatus, {
    {DraftStatus::draft, "DRAFT"},
    {DraftStatus::approved, "APPROVED"},
    {DraftStatus::discarded, "DISCARDED"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(GoalStatus, {
    {GoalStatus::proposed, "PROPOSED"},
    {GoalStatus::adopted, "ADOPTED"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(GoalSource, {
    {GoalSource::agent_proposed, "AGENT_PROPOSED"},
    {GoalSource::user_stated, "USER_STATED"},
})
NLOHMANN_JSON_SERIALIZE_ENUM(ReflectionStatus, {
    {ReflectionStatus::draft, "DRAFT"},
    {ReflectionStatus::approved, "APPROVED"},
})

struct TranscriptTurn {
  llm::Role role = llm::Role::agent;
  std::string text;
  State state_after = State::init;
  std::int64_t ts_ms = 0;
};

struct Session {
  SessionId session_id;
  UserId user_id;
  MeetingId meeting_id;
  SessionKind kind = SessionKind::solicitation;
  State state = State::init;
  std::vector<TranscriptTurn> transcript;
  std::int64_t created_at_ms = 0;
  Roster roster;
  llm::Bindings context;  // fixed at start; adopted_goal is added per turn
  std::optional<DraftId> open_draft;
  std::optional<std::string> pending_text;  // drafted wording still lacking a target
  std::optional<GoalId> open_goal;
  std::optional<ReflectionId> open_reflection;
};

struct DraftFeedback {
  DraftId draft_id;
  SessionId session_id;
  UserId author_id;
  std::string text;
  router::Target target;
  DraftStatus status = DraftStatus::draft;
  std::vector<std::string> warnings;  // teammate names found in the text
  std::optional<RecordId> record_id;
};

struct Goal {
  GoalId goal_id;
  SessionId session_id;
  UserId user_id;
  MeetingId meeting_id;
  std::string text;
  GoalStatus status = GoalStatus::proposed;
  GoalSource source = GoalSource::agent_proposed;
};

struct Reflection {
  ReflectionId reflection_id;
  GoalId goal_id;
  SessionId session_id;
  std::string text;
  ReflectionStatus status = ReflectionStatus::draft;
};

/// What start_solicitation needs to know about the meeting that just ended.
struct SolicitationContext {
  MeetingId meeting_id;
  MeetingState meeting_state = MeetingState::scheduled;
  Roster roster;
  const capture::MeetingStats* stats = nullptr;
};

/// What start_ihp needs: the upcoming meeting, the bundle already built for
/// the user, and the previous meeting's stats if there was one.
struct IhpContext {
  MeetingId meeting_id;
  MeetingState meeting_state = MeetingState::scheduled;
  Condition condition = Condition::treatment;
  Roster roster;
  const router::DeliveryBundle* bundle = nullptr;
  const capture::MeetingStats* previous_stats = nullptr;
};

struct TurnResult {
  std::string reply;
  State state = State::init;
  llm::DirectiveKind applied = llm::DirectiveKind::none;
  bool parse_warning = false;
  bool reprompted = false;
  bool fallback = false;  // canned reply, state kept
  bool degraded = false;  // gateway failed, state kept
  std::optional<std::string> error_code;
  std::optional<DraftId> draft_id;
  std::optional<GoalId> goal_id;
  std::optional<ReflectionId> reflection_id;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const TurnResult& r);

/// The declared transition graph, including the button-driven edges.
/// Exposed so callers and tests can check observed paths.
bool is_declared_edge(SessionKind kind, State from, State to);

using FeedbackSubmitter = std::function<RecordId(const DraftFeedback&)>;

class Engine {
 public:
  explicit Engine(std::string agent_name = "Emily") : agent_name_(std::move(agent_name)) {}

  const Session& start_solicitation(const UserId& user, const SolicitationContext& ctx, std::int64_t now_ms);
  const Session& start_ihp(const UserId& user, const IhpContext& ctx, std::int64_t now_ms);

  TurnResult handle_user_message(const SessionId& id, const std::string& text, std::int64_t now_ms,
                                 llm::AgentBackend& backend);

  /// Validates the draft, hands it to `submit`, and only then marks it
  /// APPROVED. Returns the record id.
  RecordId approve_feedback(const DraftId& id, std::int64_t now_ms, const FeedbackSubmitter& submit);
  void discard_feedback(const DraftId& id, std::int64_t now_ms);
  const Goal& adopt_goal(const GoalId& id, std::int64_t now_ms);
  const Reflection& approve_reflection(const ReflectionId& id, std::int64_t now_ms);

  const Session& session(const SessionId& id) const;
  const Session* find_session(const UserId& user, const MeetingId& meeting, SessionKind kind) const;
  const DraftFeedback& draft(const DraftId& id) const;
  const Goal& goal(const GoalId& id) const;
  const Reflection& reflection(const ReflectionId& id) const;

  /// ADOPTED goals of this user for this meeting, each with its approved
  /// reflection if any. Nobody else's goals are ever included.
  nlohmann::json goal_panel(const UserId& user, const MeetingId& meeting) const;

  /// The rendered system prompt the session's next turn would use.
  std::string current_prompt(const SessionId& id, const llm::TemplateRegistry& templates) const;
  llm::AgentRequest request_for(const Session& s) const;

  nlohmann::json session_view(const SessionId& id) const;
  std::string transcript_jsonl(const SessionId& id) const;

  const std::map<SessionId, Session>& sessions() const { return sessions_; }
  const std::map<DraftId, DraftFeedback>& drafts() const { return drafts_; }
  const std::map<GoalId, Goal>& goals() const { return goals_; }
  const std::map<ReflectionId, Reflection>& reflections() const { return reflections_; }

  friend void to_json(nlohmann::json& j, const Engine& e);
  friend void from_json(const nlohmann::json& j, Engine& e);

 private:
  struct Plan;

  Session& session_mut(const SessionId& id);
  Session& create(const UserId& user, const MeetingId& meeting, SessionKind kind, const Roster& roster,
                  std::int64_t now_ms);
  std::optional<Plan> plan(const Session& s, const llm::AgentDirective& d) const;
  void apply(Session& s, const Plan& p, const llm::AgentDirective& d, TurnResult& out);
  void say(Session& s, std::string text, std::int64_t now_ms);

  std::string agent_name_;
  IdSource ids_;
  std::map<SessionId, Session> sessions_;
  std::map<DraftId, DraftFeedback> drafts_;
  std::map<GoalId, Goal> goals_;
  std::map<ReflectionId, Reflection> reflections_;
};

/// Plain-language summaries used as prompt context and in openers.
std::string speaking_overview(const capture::MeetingStats& stats, const Roster& roster);
std::string speaking_for(const capture::MeetingStats& stats, const UserId& user);
std::string attendance_overview(const capture::MeetingStats& stats, const Roster& roster);
std::string attendance_for(const capture::MeetingStats& stats, const UserId& user);
std::string feedback_items_text(const router::DeliveryBundle& bundle);

}  // namespace huddle::conversation
