#include "huddle/conversation/engine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "huddle/common/error.hpp"

namespace huddle::conversation {

using llm::DirectiveKind;
using llm::Role;

namespace {

constexpr const char* kEmptyReply = "Go on, I'm listening.";
constexpr const char* kDegradedReply =
    "Sorry, I'm having trouble answering right now. Could you say that again in a moment?";
constexpr const char* kFallbackReply = "Let's stay with this for a moment. Could you tell me a little more?";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

const char* state_key(State s) {
  switch (s) {
    case State::init: return "init";
    case State::probing: return "probing";
    case State::drafting: return "drafting";
    case State::targeting: return "targeting";
    case State::await_approval: return "await_approval";
    case State::present_feedback: return "present_feedback";
    case State::goal_elicitation: return "goal_elicitation";
    case State::await_adoption: return "await_adoption";
    case State::transgression_elicitation: return "transgression_elicitation";
    case State::await_reflection_approval: return "await_reflection_approval";
    case State::complete: return "complete";
  }
  return "?";
}

std::string template_for(const Session& s) {
  return std::string(s.kind == SessionKind::ihp ? "ihp." : "solicitation.") + state_key(s.state);
}

// Share of speaking relative to an even split among those who joined.
enum class Band { above, even, below, silent };

Band band_of(std::int64_t spoke, std::int64_t total, std::size_t joined) {
  if (spoke == 0) return Band::silent;
  const double ratio = static_cast<double>(spoke) * static_cast<double>(joined) / static_cast<double>(total);
  if (ratio > 1.5) return Band::above;
  if (ratio < 0.5) return Band::below;
  return Band::even;
}

const char* band_text(Band b) {
  switch (b) {
    case Band::above: return "well above an even share";
    case Band::even: return "close to an even share";
    case Band::below: return "well below an even share";
    case Band::silent: return "no recorded speaking time";
  }
  return "";
}

struct Totals {
  std::int64_t total = 0;
  std::size_t joined = 0;
};

Totals totals_of(const capture::MeetingStats& stats) {
  Totals t;
  for (const auto& p : stats.participants) {
    if (!p.attendance.joined) continue;
    ++t.joined;
    t.total += p.speaking.total_speaking_ms;
  }
  return t;
}

std::string name_of(const Roster& roster, const UserId& id) {
  const auto* m = roster.find(id);
  return m ? m->display_name : id.value;
}

std::string opener_overview(const capture::MeetingStats& stats) {
  const auto t = totals_of(stats);
  if (t.total == 0) return "I couldn't pick up much speaking from that meeting.";
  bool uneven = false;
  for (const auto& p : stats.participants)
    if (p.attendance.joined) {
      const auto b = band_of(p.speaking.total_speaking_ms, t.total, t.joined);
      uneven = uneven || b != Band::even;
    }
  return uneven ? "Looking at the speaking times, some members spoke substantially more than others."
                : "Speaking time looked fairly balanced across the group.";
}

std::optional<router::Target> resolve_target(const std::string& raw, const Roster& roster) {
  const auto t = lower(trim(raw));
  if (t == "everyone" || t == "everybody" || t == "all" || t == "the team") return router::Target::everyone();
  for (const auto& m : roster.members)
    if (lower(m.display_name) == t || lower(m.user_id.value) == t) return router::Target::individual(m.user_id);
  return std::nullopt;
}

nlohmann::json draft_json(const DraftFeedback& d) {
  return {{"draft_id", d.draft_id},   {"session_id", d.session_id}, {"author_id", d.author_id},
          {"text", d.text},           {"target", d.target},         {"status", d.status},
          {"warnings", d.warnings},   {"record_id", d.record_id}};
}

DraftFeedback draft_from(const nlohmann::json& j) {
  DraftFeedback d;
  d.draft_id = j.at("draft_id").get<DraftId>();
  d.session_id = j.at("session_id").get<SessionId>();
  d.author_id = j.at("author_id").get<UserId>();
  d.text = j.at("text").get<std::string>();
  d.target = j.at("target").get<router::Target>();
  d.status = j.at("status").get<DraftStatus>();
  d.warnings = j.at("warnings").get<std::vector<std::string>>();
  d.record_id = j.at("record_id").get<std::optional<RecordId>>();
  return d;
}

nlohmann::json turn_json(const TranscriptTurn& t) {
  return {{"role", t.role}, {"text", t.text}, {"state_after", t.state_after}, {"ts_ms", t.ts_ms}};
}

}  // namespace

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Goal, goal_id, session_id, user_id, meeting_id, text, status, source)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Reflection, reflection_id, goal_id, session_id, text, status)

std::string to_string(State s) { return nlohmann::json(s).get<std::string>(); }

const std::vector<State>& states_of(SessionKind kind) {
  static const std::vector<State> solicitation = {State::init,      State::probing,        State::drafting,
                                                  State::targeting, State::await_approval, State::complete};
  static const std::vector<State> ihp = {State::init,
                                         State::present_feedback,
                                         State::goal_elicitation,
                                         State::await_adoption,
                                         State::transgression_elicitation,
                                         State::await_reflection_approval,
                                         State::complete};
  return kind == SessionKind::ihp ? ihp : solicitation;
}

bool is_declared_edge(SessionKind kind, State from, State to) {
  using S = State;
  const auto& valid = states_of(kind);
  if (std::find(valid.begin(), valid.end(), from) == valid.end() ||
      std::find(valid.begin(), valid.end(), to) == valid.end())
    return false;
  if (from == S::complete) return false;
  if (from == to) return true;  // any live state may hold (chat, fallback, degraded reply)
  if (kind == SessionKind::solicitation) {
    switch (from) {
      case S::init:
      case S::probing:
        return to == S::probing || to == S::drafting || to == S::await_approval || to == S::complete;
      case S::drafting: return to == S::targeting || to == S::await_approval || to == S::complete;
      case S::targeting: return to == S::await_approval || to == S::complete;
      case S::await_approval: return to == S::drafting || to == S::probing;
      default: return false;
    }
  }
  switch (from) {
    case S::init: return to == S::present_feedback;
    case S::present_feedback: return to == S::goal_elicitation || to == S::await_adoption;
    case S::goal_elicitation: return to == S::await_adoption;
    case S::await_adoption: return to == S::goal_elicitation || to == S::transgression_elicitation;
    case S::transgression_elicitation: return to == S::await_reflection_approval;
    case S::await_reflection_approval: return to == S::complete;
    default: return false;
  }
}

void to_json(nlohmann::json& j, const TurnResult& r) {
  j = {{"reply", r.reply},
       {"state", r.state},
       {"applied", r.applied},
       {"parse_warning", r.parse_warning},
       {"reprompted", r.reprompted},
       {"fallback", r.fallback},
       {"degraded", r.degraded},
       {"error_code", r.error_code},
       {"draft_id", r.draft_id},
       {"goal_id", r.goal_id},
       {"reflection_id", r.reflection_id},
       {"warnings", r.warnings}};
}

std::string speaking_overview(const capture::MeetingStats& stats, const Roster& roster) {
  const auto t = totals_of(stats);
  if (t.total == 0) return "No speaking time was recorded.";
  std::string out = opener_overview(stats);
  for (const auto& p : stats.participants) {
    if (!p.attendance.joined) continue;
    out += " " + name_of(roster, p.speaking.user_id) + ": " +
           band_text(band_of(p.speaking.total_speaking_ms, t.total, t.joined)) + ".";
  }
  return out;
}

std::string speaking_for(const capture::MeetingStats& stats, const UserId& user) {
  const auto* p = stats.find(user);
  if (!p || !p->attendance.joined) return "Did not join that meeting.";
  const auto t = totals_of(stats);
  if (t.total == 0) return "No speaking time was recorded in that meeting.";
  return std::string("Spoke ") + band_text(band_of(p->speaking.total_speaking_ms, t.total, t.joined)) +
         " of the time.";
}

std::string attendance_overview(const capture::MeetingStats& stats, const Roster& roster) {
  const auto t = totals_of(stats);
  std::string out = std::to_string(t.joined) + " of " + std::to_string(stats.participants.size()) +
                    " members joined.";
  std::string absent;
  for (const auto& p : stats.participants)
    if (!p.attendance.joined) absent += (absent.empty() ? "" : ", ") + name_of(roster, p.speaking.user_id);
  if (!absent.empty()) out += " Not present: " + absent + ".";
  return out;
}

std::string attendance_for(const capture::MeetingStats& stats, const UserId& user) {
  const auto* p = stats.find(user);
  if (!p || !p->attendance.joined) return "Did not join.";
  if (stats.duration_ms <= 0) return "Joined.";
  const auto pct = std::lround(100.0 * static_cast<double>(p->attendance.present_ms) /
                               static_cast<double>(stats.duration_ms));
  return "Present for about " + std::to_string(pct) + "% of the meeting.";
}

std::string feedback_items_text(const router::DeliveryBundle& bundle) {
  std::string out;
  for (const auto& item : bundle.items) {
    switch (item.scope) {
      case router::ItemScope::everyone: out += "- [for the whole group] "; break;
      case router::ItemScope::to_you: out += "- [for this person only] "; break;
      case router::ItemScope::agent_default: out += "- [your own suggestion] "; break;
    }
    out += item.text + "\n";
  }
  return out;
}

struct Engine::Plan {
  enum class Action { none, set_pending, new_draft, new_goal, drop_goal, new_reflection };
  Plan(State n, Action a = Action::none, std::optional<router::Target> t = std::nullopt)
      : next(n), action(a), target(std::move(t)) {}
  State next;
  Action action;
  std::optional<router::Target> target;
};

std::optional<Engine::Plan> Engine::plan(const Session& s, const llm::AgentDirective& d) const {
  using A = Plan::Action;
  const auto kind = d.kind;

  if (s.kind == SessionKind::solicitation) {
    std::optional<router::Target> target;
    if (kind == DirectiveKind::draft_feedback && d.target) {
      target = resolve_target(*d.target, s.roster);
      if (!target) return std::nullopt;  // unknown recipient
    }
    switch (s.state) {
      case State::init:
      case State::probing:
        if (kind == DirectiveKind::none) return Plan{State::probing};
        if (kind == DirectiveKind::mark_complete) return Plan{State::complete};
        if (kind == DirectiveKind::draft_feedback)
          return target ? Plan{State::await_approval, A::new_draft, target} : Plan{State::drafting, A::set_pending};
        return std::nullopt;
      case State::drafting:
        if (kind == DirectiveKind::none) return Plan{State::targeting};
        if (kind == DirectiveKind::mark_complete) return Plan{State::complete};
        if (kind == DirectiveKind::draft_feedback)
          return target ? Plan{State::await_approval, A::new_draft, target} : Plan{State::drafting, A::set_pending};
        return std::nullopt;
      case State::targeting:
        if (kind == DirectiveKind::none) return Plan{State::targeting};
        if (kind == DirectiveKind::mark_complete) return Plan{State::complete};
        if (kind == DirectiveKind::draft_feedback && target) return Plan{State::await_approval, A::new_draft, target};
        return std::nullopt;
      case State::await_approval:
        if (kind == DirectiveKind::none) return Plan{State::await_approval};
        if (kind == DirectiveKind::draft_feedback)
          return target ? Plan{State::await_approval, A::new_draft, target} : Plan{State::drafting, A::set_pending};
        return std::nullopt;
      default:
        return std::nullopt;
    }
  }

  switch (s.state) {
    case State::present_feedback:
      if (kind == DirectiveKind::none) return Plan{State::goal_elicitation};
      if (kind == DirectiveKind::propose_goal) return Plan{State::await_adoption, A::new_goal};
      return std::nullopt;
    case State::goal_elicitation:
      if (kind == DirectiveKind::none) return Plan{State::goal_elicitation};
      if (kind == DirectiveKind::propose_goal) return Plan{State::await_adoption, A::new_goal};
      return std::nullopt;
    case State::await_adoption:
      // Anything but a fresh proposal counts as not adopting; the proposal is
      // withdrawn and the conversation goes back to finding a goal.
      if (kind == DirectiveKind::none) return Plan{State::goal_elicitation, A::drop_goal};
      if (kind == DirectiveKind::propose_goal) return Plan{State::await_adoption, A::new_goal};
      return std::nullopt;
    case State::transgression_elicitation:
      if (kind == DirectiveKind::none) return Plan{State::transgression_elicitation};
      if (kind == DirectiveKind::draft_reflection) return Plan{State::await_reflection_approval, A::new_reflection};
      return std::nullopt;
    case State::await_reflection_approval:
      if (kind == DirectiveKind::none) return Plan{State::await_reflection_approval};
      if (kind == DirectiveKind::draft_reflection) return Plan{State::await_reflection_approval, A::new_reflection};
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

void Engine::apply(Session& s, const Plan& p, const llm::AgentDirective& d, TurnResult& out) {
  using A = Plan::Action;
  auto drop_open_draft = [&] {
    if (s.open_draft) {
      auto& old = drafts_.at(*s.open_draft);
      if (old.status == DraftStatus::draft) old.status = DraftStatus::discarded;
      s.open_draft.reset();
    }
  };
  // Superseded proposals stay on record as PROPOSED but can no longer be adopted.
  auto drop_open_goal = [&] {
    if (s.open_goal && goals_.at(*s.open_goal).status == GoalStatus::proposed) s.open_goal.reset();
  };

  switch (p.action) {
    case A::none:
      break;
    case A::set_pending:
      drop_open_draft();
      s.pending_text = d.text;
      break;
    case A::new_draft: {
      drop_open_draft();
      DraftFeedback draft;
      draft.draft_id = ids_.next_id<DraftId>("draft");
      draft.session_id = s.session_id;
      draft.author_id = s.user_id;
      draft.text = d.text;
      draft.target = *p.target;
      draft.warnings = router::mentioned_members(d.text, s.roster);
      if (draft.target.recipient == s.user_id) draft.warnings.push_back("target is the author");
      out.draft_id = draft.draft_id;
      out.warnings = draft.warnings;
      s.open_draft = draft.draft_id;
      s.pending_text.reset();
      drafts_.emplace(draft.draft_id, std::move(draft));
      break;
    }
    case A::new_goal: {
      drop_open_goal();
      Goal goal{ids_.next_id<GoalId>("goal"), s.session_id, s.user_id, s.meeting_id, d.text, GoalStatus::proposed,
                d.source == "user" ? GoalSource::user_stated : GoalSource::agent_proposed};
      out.goal_id = goal.goal_id;
      s.open_goal = goal.goal_id;
      goals_.emplace(goal.goal_id, std::move(goal));
      break;
    }
    case A::drop_goal:
      drop_open_goal();
      break;
    case A::new_reflection: {
      if (!s.open_goal || goals_.at(*s.open_goal).status != GoalStatus::adopted)
        fail(ErrorCode::state, "reflection without an adopted goal");
      Reflection r{ids_.next_id<ReflectionId>("reflection"), *s.open_goal, s.session_id, d.text,
                   ReflectionStatus::draft};
      out.reflection_id = r.reflection_id;
      s.open_reflection = r.reflection_id;
      reflections_.emplace(r.reflection_id, std::move(r));
      break;
    }
  }
  s.state = p.next;
  out.applied = d.kind;
}

Session& Engine::session_mut(const SessionId& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown conversation", id.value);
  return it->second;
}

const Session& Engine::session(const SessionId& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::not_found, "unknown conversation", id.value);
  return it->second;
}

const Session* Engine::find_session(const UserId& user, const MeetingId& meeting, SessionKind kind) const {
  for (const auto& [id, s] : sessions_)
    if (s.user_id == user && s.meeting_id == meeting && s.kind == kind) return &s;
  return nullptr;
}

const DraftFeedback& Engine::draft(const DraftId& id) const {
  auto it = drafts_.find(id);
  if (it == drafts_.end()) fail(ErrorCode::not_found, "unknown draft", id.value);
  return it->second;
}

const Goal& Engine::goal(const GoalId& id) const {
  auto it = goals_.find(id);
  if (it == goals_.end()) fail(ErrorCode::not_found, "unknown goal", id.value);
  return it->second;
}

const Reflection& Engine::reflection(const ReflectionId& id) const {
  auto it = reflections_.find(id);
  if (it == reflections_.end()) fail(ErrorCode::not_found, "unknown reflection", id.value);
  return it->second;
}

Session& Engine::create(const UserId& user, const MeetingId& meeting, SessionKind kind, const Roster& roster,
                        std::int64_t now_ms) {
  if (!roster.contains(user)) fail(ErrorCode::not_found, "user is not on the meeting's team", user.value);
  if (find_session(user, meeting, kind))
    fail(ErrorCode::conflict, "a conversation of this kind already exists for this user and meeting");
  Session s;
  s.session_id = ids_.next_id<SessionId>("session");
  s.user_id = user;
  s.meeting_id = meeting;
  s.kind = kind;
  s.created_at_ms = now_ms;
  s.roster = roster;
  s.context["agent_name"] = agent_name_;
  s.context["owner_name"] = name_of(roster, user);
  auto id = s.session_id;
  return sessions_.emplace(id, std::move(s)).first->second;
}

void Engine::say(Session& s, std::string text, std::int64_t now_ms) {
  s.transcript.push_back({Role::agent, std::move(text), s.state, now_ms});
}

const Session& Engine::start_solicitation(const UserId& user, const SolicitationContext& ctx,
                                          std::int64_t now_ms) {
  if (ctx.meeting_state != MeetingState::closed)
    fail(ErrorCode::state, "feedback is gathered after the meeting has closed");
  if (!ctx.stats) fail(ErrorCode::state, "meeting stats are not finalized yet");
  auto& s = create(user, ctx.meeting_id, SessionKind::solicitation, ctx.roster, now_ms);

  std::string teammates;
  for (const auto& m : ctx.roster.members)
    if (m.user_id != user) teammates += (teammates.empty() ? "" : ", ") + m.display_name;
  s.context["teammates"] = teammates;
  s.context["speaking_summary"] = speaking_overview(*ctx.stats, ctx.roster);
  s.context["attendance_summary"] = attendance_overview(*ctx.stats, ctx.roster);

  say(s,
      "Hi " + s.context["owner_name"] + ", thanks for taking a few minutes after the meeting. " +
          opener_overview(*ctx.stats) +
          " How included did you feel in the discussion, and did everyone get a real chance to contribute?",
      now_ms);
  return s;
}

const Session& Engine::start_ihp(const UserId& user, const IhpContext& ctx, std::int64_t now_ms) {
  if (ctx.condition != Condition::treatment)
    fail(ErrorCode::state, "control meetings get the static message, not a conversation");
  if (ctx.meeting_state != MeetingState::scheduled)
    fail(ErrorCode::state, "the goal-setting conversation happens before the meeting opens");
  if (!ctx.roster.contains(user)) fail(ErrorCode::not_found, "user is not on the meeting's team", user.value);
  if (!ctx.bundle || ctx.bundle->recipient_id != user || ctx.bundle->meeting_id != ctx.meeting_id)
    fail(ErrorCode::state, "no delivery bundle for this user and meeting");
  auto& s = create(user, ctx.meeting_id, SessionKind::ihp, ctx.roster, now_ms);

  s.context["feedback_items"] = feedback_items_text(*ctx.bundle);
  if (ctx.previous_stats) {
    s.context["speaking_summary"] = speaking_for(*ctx.previous_stats, user);
    s.context["attendance_summary"] = attendance_for(*ctx.previous_stats, user);
  } else {
    s.context["speaking_summary"] = "No earlier meeting data is available.";
    s.context["attendance_summary"] = "No earlier meeting data is available.";
  }

  s.state = State::present_feedback;
  std::string opener = "Hi " + s.context["owner_name"] +
                       "! Before the next meeting starts, I'd like to go over a few things I noticed.";
  for (const auto& item : ctx.bundle->items) {
    switch (item.scope) {
      case router::ItemScope::everyone: opener += "\n- For the whole group: "; break;
      case router::ItemScope::to_you: opener += "\n- For you: "; break;
      case router::ItemScope::agent_default: opener += "\n- A suggestion of mine: "; break;
    }
    opener += item.text;
  }
  opener += "\nWhat stands out to you here?";
  say(s, std::move(opener), now_ms);
  return s;
}

llm::AgentRequest Engine::request_for(const Session& s) const {
  llm::AgentRequest req;
  req.template_id = template_for(s);
  req.bindings = s.context;
  std::string adopted;
  for (const auto& [id, g] : goals_)
    if (g.session_id == s.session_id && g.status == GoalStatus::adopted) adopted += (adopted.empty() ? "" : "; ") + g.text;
  req.bindings["adopted_goal"] = adopted.empty() ? "none yet" : adopted;
  for (const auto& t : s.transcript) req.transcript.push_back({t.role, t.text});
  return req;
}

std::string Engine::current_prompt(const SessionId& id, const llm::TemplateRegistry& templates) const {
  const auto req = request_for(session(id));
  return templates.render(req.template_id, req.bindings);
}

TurnResult Engine::handle_user_message(const SessionId& id, const std::string& text, std::int64_t now_ms,
                                       llm::AgentBackend& backend) {
  auto& s = session_mut(id);
  if (s.state == State::complete) fail(ErrorCode::state, "conversation is complete");
  const auto message = trim(text);
  if (message.empty()) fail(ErrorCode::validation, "message text is empty");
  s.transcript.push_back({Role::user, message, s.state, now_ms});

  TurnResult out;
  auto request = request_for(s);
  auto call = [&]() -> std::optional<llm::AgentDirective> {
    try {
      return backend.complete(request);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::gateway_unavailable && e.code() != ErrorCode::provider) throw;
      out.degraded = true;
      out.error_code = e.code() == ErrorCode::provider ? "provider_error:" + e.detail() : to_string(e.code());
      return std::nullopt;
    }
  };

  auto directive = call();
  std::optional<Plan> chosen;
  if (directive) {
    chosen = plan(s, *directive);
    if (!chosen) {
      out.reprompted = true;
      request.transcript.push_back(
          {Role::system, "Your last reply used directive " + nlohmann::json(directive->kind).get<std::string>() +
                             ", which is not allowed in state " + to_string(s.state) +
                             ". Answer the user again following the allowed kinds listed in your instructions."});
      directive = call();
      if (directive) chosen = plan(s, *directive);
    }
  }

  if (chosen) {
    out.parse_warning = directive->parse_warning;
    apply(s, *chosen, *directive, out);
    out.reply = trim(directive->reply_text).empty() ? kEmptyReply : trim(directive->reply_text);
  } else if (out.degraded) {
    out.reply = kDegradedReply;
  } else {
    out.fallback = true;
    out.reply = kFallbackReply;
  }
  out.state = s.state;
  say(s, out.reply, now_ms);
  return out;
}

RecordId Engine::approve_feedback(const DraftId& id, std::int64_t now_ms, const FeedbackSubmitter& submit) {
  auto it = drafts_.find(id);
  if (it == drafts_.end()) fail(ErrorCode::not_found, "unknown draft", id.value);
  auto& d = it->second;
  if (d.status != DraftStatus::draft)
    fail(ErrorCode::state, "draft is already " + nlohmann::json(d.status).get<std::string>());
  auto& s = session_mut(d.session_id);
  if (s.state != State::await_approval || s.open_draft != id)
    fail(ErrorCode::state, "draft is not awaiting approval");
  if (d.target.recipient == d.author_id) fail(ErrorCode::validation, "feedback cannot target its author");

  auto record = submit(d);
  d.status = DraftStatus::approved;
  d.record_id = record;
  s.open_draft.reset();
  s.state = State::probing;
  say(s, "Thanks, that's on its way. Is there anything else about the meeting you'd like to share?", now_ms);
  return record;
}

void Engine::discard_feedback(const DraftId& id, std::int64_t now_ms) {
  auto it = drafts_.find(id);
  if (it == drafts_.end()) fail(ErrorCode::not_found, "unknown draft", id.value);
  auto& d = it->second;
  if (d.status != DraftStatus::draft)
    fail(ErrorCode::state, "draft is already " + nlohmann::json(d.status).get<std::string>());
  auto& s = session_mut(d.session_id);
  if (s.state != State::await_approval || s.open_draft != id)
    fail(ErrorCode::state, "draft is not awaiting approval");
  d.status = DraftStatus::discarded;
  s.open_draft.reset();
  s.state = State::probing;
  say(s, "No problem, I've dropped that one. Anything else on your mind about the meeting?", now_ms);
}

const Goal& Engine::adopt_goal(const GoalId& id, std::int64_t now_ms) {
  auto it = goals_.find(id);
  if (it == goals_.end()) fail(ErrorCode::not_found, "unknown goal", id.value);
  auto& g = it->second;
  if (g.status != GoalStatus::proposed) fail(ErrorCode::state, "goal is already adopted");
  auto& s = session_mut(g.session_id);
  if (s.state != State::await_adoption || s.open_goal != id)
    fail(ErrorCode::state, "no goal is awaiting adoption", to_string(s.state));
  g.status = GoalStatus::adopted;
  s.state = State::transgression_elicitation;
  say(s,
      "Great, that goal is now in your panel for the meeting. Can you think of a recent time when you "
      "didn't quite manage this?",
      now_ms);
  return g;
}

const Reflection& Engine::approve_reflection(const ReflectionId& id, std::int64_t now_ms) {
  auto it = reflections_.find(id);
  if (it == reflections_.end()) fail(ErrorCode::not_found, "unknown reflection", id.value);
  auto& r = it->second;
  if (r.status != ReflectionStatus::draft) fail(ErrorCode::state, "reflection is already approved");
  auto& s = session_mut(r.session_id);
  if (s.state != State::await_reflection_approval || s.open_reflection != id)
    fail(ErrorCode::state, "reflection is not awaiting approval");
  r.status = ReflectionStatus::approved;
  s.state = State::complete;
  say(s, "Thanks for thinking that through. Your goal and reflection will stay in your panel during the meeting.",
      now_ms);
  return r;
}

nlohmann::json Engine::goal_panel(const UserId& user, const MeetingId& meeting) const {
  nlohmann::json goals = nlohmann::json::array();
  for (const auto& [id, g] : goals_) {
    if (g.user_id != user || g.meeting_id != meeting || g.status != GoalStatus::adopted) continue;
    nlohmann::json entry = {{"goal_id", g.goal_id}, {"text", g.text}, {"source", g.source}, {"reflection", nullptr}};
    for (const auto& [rid, r] : reflections_)
      if (r.goal_id == g.goal_id && r.status == ReflectionStatus::approved) entry["reflection"] = r.text;
    goals.push_back(std::move(entry));
  }
  return {{"user_id", user}, {"meeting_id", meeting}, {"goals", std::move(goals)}};
}

nlohmann::json Engine::session_view(const SessionId& id) const {
  const auto& s = session(id);
  nlohmann::json transcript = nlohmann::json::array();
  for (const auto& t : s.transcript) transcript.push_back(turn_json(t));
  nlohmann::json j = {{"session_id", s.session_id},
                      {"user_id", s.user_id},
                      {"meeting_id", s.meeting_id},
                      {"kind", s.kind},
                      {"state", s.state},
                      {"created_at", s.created_at_ms},
                      {"transcript", std::move(transcript)},
                      {"pending_text", s.pending_text},
                      {"draft", nullptr},
                      {"goal", nullptr},
                      {"reflection", nullptr}};
  if (s.open_draft) j["draft"] = draft_json(drafts_.at(*s.open_draft));
  if (s.open_goal) j["goal"] = goals_.at(*s.open_goal);
  if (s.open_reflection) j["reflection"] = reflections_.at(*s.open_reflection);
  return j;
}

std::string Engine::transcript_jsonl(const SessionId& id) const {
  std::string out;
  for (const auto& t : session(id).transcript) out += turn_json(t).dump() + "\n";
  return out;
}

void to_json(nlohmann::json& j, const Engine& e) {
  j = {{"ids", e.ids_},
       {"sessions", nlohmann::json::array()},
       {"drafts", nlohmann::json::array()},
       {"goals", nlohmann::json::array()},
       {"reflections", nlohmann::json::array()}};
  for (const auto& [id, s] : e.sessions_) {
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& t : s.transcript) transcript.push_back(turn_json(t));
    j["sessions"].push_back({{"session_id", s.session_id},
                             {"user_id", s.user_id},
                             {"meeting_id", s.meeting_id},
                             {"kind", s.kind},
                             {"state", s.state},
                             {"transcript", std::move(transcript)},
                             {"created_at", s.created_at_ms},
                             {"team_id", s.roster.team_id},
                             {"members", s.roster.members},
                             {"context", s.context},
                             {"open_draft", s.open_draft},
                             {"pending_text", s.pending_text},
                             {"open_goal", s.open_goal},
                             {"open_reflection", s.open_reflection}});
  }
  for (const auto& [id, d] : e.drafts_) j["drafts"].push_back(draft_json(d));
  for (const auto& [id, g] : e.goals_) j["goals"].push_back(g);
  for (const auto& [id, r] : e.reflections_) j["reflections"].push_back(r);
}

void from_json(const nlohmann::json& j, Engine& e) {
  e.ids_ = j.at("ids").get<IdSource>();
  e.sessions_.clear();
  e.drafts_.clear();
  e.goals_.clear();
  e.reflections_.clear();
  for (const auto& js : j.at("sessions")) {
    Session s;
    s.session_id = js.at("session_id").get<SessionId>();
    s.user_id = js.at("user_id").get<UserId>();
    s.meeting_id = js.at("meeting_id").get<MeetingId>();
    s.kind = js.at("kind").get<SessionKind>();
    s.state = js.at("state").get<State>();
    for (const auto& t : js.at("transcript"))
      s.transcript.push_back({t.at("role").get<Role>(), t.at("text").get<std::string>(),
                              t.at("state_after").get<State>(), t.at("ts_ms").get<std::int64_t>()});
    s.created_at_ms = js.at("created_at").get<std::int64_t>();
    s.roster.team_id = js.at("team_id").get<TeamId>();
    s.roster.members = js.at("members").get<std::vector<Member>>();
    s.context = js.at("context").get<llm::Bindings>();
    s.open_draft = js.at("open_draft").get<std::optional<DraftId>>();
    s.pending_text = js.at("pending_text").get<std::optional<std::string>>();
    s.open_goal = js.at("open_goal").get<std::optional<GoalId>>();
    s.open_reflection = js.at("open_reflection").get<std::optional<ReflectionId>>();
    auto id = s.session_id;
    e.sessions_.emplace(id, std::move(s));
  }
  for (const auto& jd : j.at("drafts")) {
    auto d = draft_from(jd);
    auto id = d.draft_id;
    e.drafts_.emplace(id, std::move(d));
  }
  for (const auto& jg : j.at("goals")) {
    auto g = jg.get<Goal>();
    auto id = g.goal_id;
    e.goals_.emplace(id, std::move(g));
  }
  for (const auto& jr : j.at("reflections")) {
    auto r = jr.get<Reflection>();
    auto id = r.reflection_id;
    e.reflections_.emplace(id, std::move(r));
  }
}

}  // namespace huddle::conversation
