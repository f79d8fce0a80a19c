#include "huddle/service/core.hpp"

#include <cmath>

#include "huddle/common/error.hpp"

namespace huddle::service {

namespace {

using nlohmann::json;

const json& field(const json& c, const char* key, const char* alias = nullptr) {
  if (c.contains(key)) return c[key];
  if (alias && c.contains(alias)) return c[alias];
  fail(ErrorCode::validation, std::string("missing field ") + key, key);
}

std::string text_field(const json& c, const char* key, const char* alias = nullptr) {
  const auto& v = field(c, key, alias);
  if (!v.is_string()) fail(ErrorCode::validation, std::string(key) + " must be a string", key);
  return v.get<std::string>();
}

std::int64_t int_field(const json& c, const char* key) {
  const auto& v = field(c, key);
  if (!v.is_number_integer()) fail(ErrorCode::validation, std::string(key) + " must be an integer", key);
  return v.get<std::int64_t>();
}

template <class IdT>
IdT id_field(const json& c, const char* key, const char* alias = nullptr) {
  auto v = text_field(c, key, alias);
  if (v.empty()) fail(ErrorCode::validation, std::string(key) + " is empty", key);
  return IdT{std::move(v)};
}

json questionnaire_json(const Questionnaire& q) {
  return {{"questionnaire_id", q.questionnaire_id},
          {"user_id", q.user_id},
          {"meeting_id", q.meeting_id},
          {"instrument", q.instrument},
          {"labels", q.labels},
          {"values", q.values},
          {"created_at", q.created_at_ms}};
}

Questionnaire questionnaire_from(const json& j) {
  return {j.at("questionnaire_id").get<std::string>(),
          j.at("user_id").get<UserId>(),
          j.at("meeting_id").get<std::optional<MeetingId>>(),
          j.at("instrument").get<std::string>(),
          j.at("labels").get<std::vector<std::string>>(),
          j.at("values").get<std::vector<double>>(),
          j.at("created_at").get<std::int64_t>()};
}

}  // namespace

Core::Core(CoreSettings settings)
    : settings_(std::move(settings)), router_(settings_.default_feedback), engine_(settings_.agent_name) {}

const std::vector<std::string>& Core::operations() {
  static const std::vector<std::string> ops = {
      "create_team",        "schedule_meeting", "open_meeting",  "close_meeting",   "acknowledge",
      "advance_phase",      "ingest_event",     "start_conversation", "send_message", "approve_draft",
      "discard_draft",      "adopt_goal",       "approve_reflection", "submit_questionnaire"};
  return ops;
}

namespace {

std::optional<std::string> request_id_of(const json& c) {
  if (!c.is_object() || !c.contains("request_id")) return std::nullopt;
  const auto& id = c["request_id"];
  if (!id.is_string() || id.get_ref<const std::string&>().empty() || id.get_ref<const std::string&>().size() > 128)
    fail(ErrorCode::validation, "request_id must be a string of 1 to 128 characters", "request_id");
  return id.get<std::string>();
}

}  // namespace

std::optional<json> Core::repeated_request(const json& c) const {
  const auto id = request_id_of(c);
  if (!id) return std::nullopt;
  auto it = requests_.find(*id);
  if (it == requests_.end()) return std::nullopt;
  if (it->second.command != c) fail(ErrorCode::conflict, "request_id was already used for a different command", *id);
  return std::optional<json>(std::in_place, it->second.result);
}

json Core::execute(const json& c, std::int64_t now_ms, llm::AgentBackend& backend) {
  if (auto previous = repeated_request(c)) return *previous;
  const auto id = request_id_of(c);
  json result = dispatch(c, now_ms, backend);
  if (id) {
    requests_[*id] = {c, result};
    request_order_.push_back(*id);
    if (request_order_.size() > kRequestsKept) {
      requests_.erase(request_order_.front());
      request_order_.pop_front();
    }
  }
  return result;
}

json Core::dispatch(const json& c, std::int64_t now_ms, llm::AgentBackend& backend) {
  if (!c.is_object()) fail(ErrorCode::validation, "command must be a JSON object");
  const auto op = text_field(c, "op");

  if (op == "create_team") {
    const auto& members = field(c, "members");
    if (!members.is_array()) fail(ErrorCode::validation, "members must be an array of names", "members");
    std::vector<std::string> names;
    for (const auto& m : members) {
      if (!m.is_string()) fail(ErrorCode::validation, "members must be an array of names", "members");
      names.push_back(m.get<std::string>());
    }
    const auto& team = orchestrator_.create_team(text_field(c, "name"), names);
    return team_view(team.team_id);
  }
  if (op == "schedule_meeting") {
    const auto team = id_field<TeamId>(c, "team_id");
    const auto condition = parse_enum<Condition>(field(c, "condition"), "condition");
    const auto cycle = int_field(c, "cycle_index");
    if (cycle < 0 || cycle > 1'000'000) fail(ErrorCode::validation, "cycle_index out of range", "cycle_index");
    return meeting_view(orchestrator_.schedule_meeting(team, condition, static_cast<int>(cycle)).meeting_id);
  }
  if (op == "open_meeting") {
    const auto id = id_field<MeetingId>(c, "meeting_id");
    const auto& m = orchestrator_.open_meeting(id, now_ms);
    capture_.open_meeting(id, orchestrator_.team(m.team_id).member_ids);
    return meeting_view(id);
  }
  if (op == "close_meeting") return close_meeting(c, now_ms);
  if (op == "acknowledge") {
    const auto meeting = id_field<MeetingId>(c, "meeting_id", "meeting");
    const auto& p = orchestrator_.acknowledge_control(id_field<UserId>(c, "user_id", "user"), meeting);
    return {{"phase", p}, {"message", settings_.control_message}};
  }
  if (op == "advance_phase") {
    const auto user = id_field<UserId>(c, "user_id", "user");
    const auto meeting = id_field<MeetingId>(c, "meeting_id", "meeting");
    const auto* s = engine_.find_session(user, meeting, conversation::SessionKind::solicitation);
    return orchestrator_.advance_phase(user, meeting, s && s->state == conversation::State::complete);
  }
  if (op == "ingest_event") {
    capture::VoiceActivityEvent e;
    e.meeting_id = id_field<MeetingId>(c, "meeting_id");
    e.user_id = id_field<UserId>(c, "user_id");
    e.kind = parse_enum<capture::EventKind>(field(c, "kind"), "kind");
    e.ts_ms = int_field(c, "ts_ms");
    if (orchestrator_.meeting(e.meeting_id).state != MeetingState::open)
      fail(ErrorCode::state, "meeting is not open", e.meeting_id.value);
    const bool inserted = capture_.ingest(e);
    return {{"ok", true}, {"duplicate", !inserted}};
  }
  if (op == "start_conversation") return start_conversation(c, now_ms);
  if (op == "send_message") {
    const auto id = id_field<SessionId>(c, "session_id");
    const auto& text = field(c, "text");
    if (!text.is_string()) fail(ErrorCode::validation, "text must be a string", "text");
    json out = engine_.handle_user_message(id, text.get<std::string>(), now_ms, backend);
    out["session_id"] = id;
    return out;
  }
  if (op == "approve_draft") return approve_draft(c, now_ms);
  if (op == "discard_draft") {
    const auto id = id_field<DraftId>(c, "draft_id");
    engine_.discard_feedback(id, now_ms);
    return {{"draft_id", id}, {"status", conversation::DraftStatus::discarded}};
  }
  if (op == "adopt_goal") {
    const auto& g = engine_.adopt_goal(id_field<GoalId>(c, "goal_id"), now_ms);
    return {{"goal_id", g.goal_id}, {"status", g.status}, {"text", g.text}, {"session_id", g.session_id}};
  }
  if (op == "approve_reflection") return approve_reflection(c, now_ms);
  if (op == "submit_questionnaire") return submit_questionnaire(c, now_ms);
  fail(ErrorCode::validation, "unknown op " + op, "op");
}

json Core::close_meeting(const json& c, std::int64_t now_ms) {
  const auto id = id_field<MeetingId>(c, "meeting_id");
  std::optional<std::int64_t> duration;
  if (c.contains("duration_ms") && !c["duration_ms"].is_null()) {
    duration = int_field(c, "duration_ms");
    if (*duration < 0) fail(ErrorCode::validation, "duration_ms must be non-negative", "duration_ms");
  }
  const auto& m = orchestrator_.close_meeting(id, now_ms);
  capture_.close_meeting(id, duration.value_or(*m.closed_at - *m.opened_at));
  capture_.finalize(id);
  json out = meeting_view(id);
  out["stats"] = meeting_stats(id);
  return out;
}

json Core::start_conversation(const json& c, std::int64_t now_ms) {
  const auto kind = parse_enum<conversation::SessionKind>(field(c, "kind"), "kind");
  const auto user_id = id_field<UserId>(c, "user_id", "user");
  const auto meeting_id = id_field<MeetingId>(c, "meeting_id", "meeting");
  const auto& meeting = orchestrator_.meeting(meeting_id);
  const auto& user = orchestrator_.user(user_id);
  if (user.team_id != meeting.team_id)
    fail(ErrorCode::authorization, "user is not on the meeting's team", user_id.value);
  const auto roster = orchestrator_.roster(meeting.team_id);

  if (kind == conversation::SessionKind::solicitation) {
    conversation::SolicitationContext ctx{meeting_id, meeting.state, roster, capture_.stats(meeting_id)};
    return engine_.session_view(engine_.start_solicitation(user_id, ctx, now_ms).session_id);
  }

  // Everything that can refuse the session is checked before the bundle is
  // built, since building it marks feedback as delivered.
  if (meeting.condition != Condition::treatment)
    fail(ErrorCode::state, "control meetings get the static message, not a conversation");
  if (meeting.state != MeetingState::scheduled)
    fail(ErrorCode::state, "the goal-setting conversation happens before the meeting opens");
  if (engine_.find_session(user_id, meeting_id, kind))
    fail(ErrorCode::conflict, "a conversation of this kind already exists for this user and meeting");

  const auto& bundle = router_.build_bundle(user_id, roster, orchestrator_.ref(meeting_id));
  const capture::MeetingStats* previous_stats = nullptr;
  if (const auto* prev = orchestrator_.previous(meeting)) previous_stats = capture_.stats(prev->meeting_id);
  conversation::IhpContext ctx{meeting_id, meeting.state, meeting.condition, roster, &bundle, previous_stats};
  return engine_.session_view(engine_.start_ihp(user_id, ctx, now_ms).session_id);
}

json Core::approve_draft(const json& c, std::int64_t now_ms) {
  const auto id = id_field<DraftId>(c, "draft_id");
  const auto& session = engine_.session(engine_.draft(id).session_id);
  const auto roster = session.roster;
  const auto origin = orchestrator_.ref(session.meeting_id);
  const auto record = engine_.approve_feedback(id, now_ms, [&](const conversation::DraftFeedback& d) {
    return router_.submit(d.author_id, roster, origin, d.text, d.target, now_ms);
  });
  return {{"draft_id", id}, {"status", conversation::DraftStatus::approved}, {"record_id", record}};
}

json Core::approve_reflection(const json& c, std::int64_t now_ms) {
  const auto id = id_field<ReflectionId>(c, "reflection_id");
  const auto& r = engine_.approve_reflection(id, now_ms);
  const auto& s = engine_.session(r.session_id);
  if (s.state == conversation::State::complete) {
    const auto phase = orchestrator_.phase(s.user_id, s.meeting_id);
    const auto& meeting = orchestrator_.meeting(s.meeting_id);
    if (phase.phase == orchestrator::Phase::pre_meeting && !phase.completed && meeting.state != MeetingState::closed)
      orchestrator_.complete_pre_meeting(s.user_id, s.meeting_id);
  }
  return {{"reflection_id", r.reflection_id}, {"status", r.status}, {"goal_id", r.goal_id},
          {"session_state", s.state}};
}

json Core::submit_questionnaire(const json& c, std::int64_t now_ms) {
  Questionnaire q;
  q.user_id = id_field<UserId>(c, "user_id", "user");
  const auto& user = orchestrator_.user(q.user_id);
  if (c.contains("meeting_id") && !c["meeting_id"].is_null()) {
    q.meeting_id = id_field<MeetingId>(c, "meeting_id");
    if (orchestrator_.meeting(*q.meeting_id).team_id != user.team_id)
      fail(ErrorCode::authorization, "user is not on the meeting's team", q.user_id.value);
  }
  q.instrument = text_field(c, "instrument");
  if (q.instrument.empty()) fail(ErrorCode::validation, "instrument is empty", "instrument");
  const auto& labels = field(c, "labels");
  const auto& values = field(c, "values");
  if (!labels.is_array() || !values.is_array() || labels.size() != values.size() || labels.empty())
    fail(ErrorCode::validation, "labels and values must be non-empty arrays of equal length");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].is_string()) fail(ErrorCode::validation, "labels must be strings", "labels");
    if (!values[i].is_number() || !std::isfinite(values[i].get<double>()))
      fail(ErrorCode::validation, "values must be finite numbers", "values");
    q.labels.push_back(labels[i].get<std::string>());
    q.values.push_back(values[i].get<double>());
  }
  q.questionnaire_id = "questionnaire-" + std::to_string(questionnaires_.size() + 1);
  q.created_at_ms = now_ms;
  questionnaires_.push_back(q);
  return questionnaire_json(q);
}

json Core::team_view(const TeamId& id) const {
  const auto roster = orchestrator_.roster(id);
  return {{"team_id", id}, {"name", orchestrator_.team(id).name}, {"members", roster.members}};
}

json Core::meeting_view(const MeetingId& id) const {
  const auto& m = orchestrator_.meeting(id);
  json j = m;
  if (m.condition == Condition::control) j["pre_meeting_message"] = settings_.control_message;
  return j;
}

json Core::meeting_stats(const MeetingId& id) const {
  const auto& m = orchestrator_.meeting(id);
  const auto* stats = capture_.stats(id);
  if (!stats) fail(ErrorCode::state, "meeting stats are not finalized", id.value);
  json j = *stats;
  j["team_id"] = m.team_id;
  j["condition"] = m.condition;
  j["cycle_index"] = m.cycle_index;
  return j;
}

json Core::phase_view(const UserId& user, const MeetingId& meeting) const {
  return orchestrator_.phase(user, meeting);
}

json Core::conversation_view(const SessionId& id) const { return engine_.session_view(id); }

std::string Core::transcript(const SessionId& id) const { return engine_.transcript_jsonl(id); }

json Core::outgoing(const UserId& user) const {
  orchestrator_.user(user);
  json records = json::array();
  for (const auto* r : router_.outgoing(user)) records.push_back(router::outgoing_view(*r));
  return {{"user_id", user}, {"records", std::move(records)}};
}

json Core::inbox(const UserId& user_id, const MeetingId& meeting_id) const {
  const auto& user = orchestrator_.user(user_id);
  const auto& meeting = orchestrator_.meeting(meeting_id);
  if (user.team_id != meeting.team_id)
    fail(ErrorCode::authorization, "user is not on the meeting's team", user_id.value);
  return router_.preview_bundle(user_id, orchestrator_.roster(meeting.team_id), orchestrator_.ref(meeting_id));
}

json Core::goals(const UserId& user, const MeetingId& meeting) const {
  orchestrator_.user(user);
  orchestrator_.meeting(meeting);
  return engine_.goal_panel(user, meeting);
}

json Core::questionnaires() const {
  json out = json::array();
  for (const auto& q : questionnaires_) out.push_back(questionnaire_json(q));
  return out;
}

std::string Core::prompt_for(const SessionId& id, const llm::TemplateRegistry& templates) const {
  return engine_.current_prompt(id, templates);
}

json Core::requests_json() const {
  json out = json::array();
  for (const auto& id : request_order_) {
    const auto& r = requests_.at(id);
    out.push_back({{"request_id", id}, {"command", r.command}, {"result", r.result}});
  }
  return out;
}

json Core::state() const {
  return {{"orchestrator", orchestrator_},
          {"capture", capture_},
          {"router", router_},
          {"engine", engine_},
          {"questionnaires", questionnaires()},
          {"requests", requests_json()}};
}

void Core::restore(const json& state) {
  orchestrator_ = state.at("orchestrator").get<orchestrator::Orchestrator>();
  capture_ = state.at("capture").get<capture::CaptureStore>();
  router::FeedbackRouter router(settings_.default_feedback);
  from_json(state.at("router"), router);
  router_ = std::move(router);
  conversation::Engine engine(settings_.agent_name);
  from_json(state.at("engine"), engine);
  engine_ = std::move(engine);
  questionnaires_.clear();
  for (const auto& q : state.at("questionnaires")) questionnaires_.push_back(questionnaire_from(q));
  requests_.clear();
  request_order_.clear();
  for (const auto& r : state.value("requests", json::array())) {
    const auto id = r.at("request_id").get<std::string>();
    requests_[id] = {r.at("command"), r.at("result")};
    request_order_.push_back(id);
  }
}

}  // namespace huddle::service
