#include "huddle/capture/capture.hpp"

#include <algorithm>

#include "huddle/common/error.hpp"

namespace huddle::capture {

const ParticipantStats* MeetingStats::find(const UserId& id) const {
  for (const auto& p : participants)
    if (p.speaking.user_id == id) return &p;
  return nullptr;
}

namespace {

// One on/off stream (speaking or presence) for one member.
struct Interval {
  bool on = false;
  std::int64_t since = 0;
  std::int64_t total = 0;
  std::int64_t ignored_off = 0;

  void start(std::int64_t t) {
    if (on) return;
    on = true;
    since = t;
  }
  void stop(std::int64_t t) {
    if (!on) {
      ++ignored_off;
      return;
    }
    total += t - since;
    on = false;
  }
  void finish(std::int64_t end) {
    if (on) total += end - since;
    on = false;
  }
};

}  // namespace

MeetingStats aggregate(const MeetingId& meeting_id, std::span<const LoggedEvent> ordered,
                       std::span<const UserId> members, std::int64_t duration_ms) {
  MeetingStats out{meeting_id, duration_ms, {}};
  for (const auto& member : members) {
    Interval speaking, presence;
    bool joined = false;
    for (const auto& e : ordered) {
      if (e.user_id != member) continue;
      const std::int64_t t = std::clamp<std::int64_t>(e.ts_ms, 0, duration_ms);
      switch (e.kind) {
        case EventKind::join:
          joined = true;
          presence.start(t);
          break;
        case EventKind::leave: presence.stop(t); break;
        case EventKind::speak_start: speaking.start(t); break;
        case EventKind::speak_stop: speaking.stop(t); break;
      }
    }
    speaking.finish(duration_ms);
    presence.finish(duration_ms);
    ParticipantStats p;
    p.speaking = {member, meeting_id, speaking.total};
    p.attendance = {member, meeting_id, presence.total, joined};
    p.ignored_stops = speaking.ignored_off;
    p.ignored_leaves = presence.ignored_off;
    p.data_complete = joined && speaking.ignored_off == 0 && presence.ignored_off == 0;
    out.participants.push_back(std::move(p));
  }
  return out;
}

void CaptureStore::open_meeting(const MeetingId& meeting, std::vector<UserId> members) {
  if (logs_.contains(meeting)) fail(ErrorCode::state, "meeting capture already opened");
  logs_[meeting].members = std::move(members);
}

CaptureStore::MeetingLog& CaptureStore::log_for(const MeetingId& meeting) {
  auto it = logs_.find(meeting);
  if (it == logs_.end()) fail(ErrorCode::state, "meeting " + meeting.value + " is not open");
  return it->second;
}

const CaptureStore::MeetingLog* CaptureStore::find(const MeetingId& meeting) const {
  auto it = logs_.find(meeting);
  return it == logs_.end() ? nullptr : &it->second;
}

bool CaptureStore::ingest(const VoiceActivityEvent& event) {
  auto& log = log_for(event.meeting_id);
  if (log.closed) fail(ErrorCode::state, "meeting " + event.meeting_id.value + " is closed");
  if (std::find(log.members.begin(), log.members.end(), event.user_id) == log.members.end())
    fail(ErrorCode::authorization, "user " + event.user_id.value + " is not a member of this meeting");
  if (event.ts_ms < 0) fail(ErrorCode::validation, "ts_ms must be non-negative");

  auto key = std::make_tuple(event.user_id.value, event.kind, event.ts_ms);
  if (!log.seen.insert(key).second) return false;

  LoggedEvent logged{event.user_id, event.kind, event.ts_ms, log.arrivals++};
  auto pos = std::upper_bound(log.ordered.begin(), log.ordered.end(), logged.ts_ms,
                              [](std::int64_t ts, const LoggedEvent& e) { return ts < e.ts_ms; });
  log.ordered.insert(pos, std::move(logged));
  return true;
}

void CaptureStore::close_meeting(const MeetingId& meeting, std::int64_t duration_ms) {
  auto& log = log_for(meeting);
  if (log.closed) fail(ErrorCode::state, "meeting already closed");
  if (duration_ms < 0) fail(ErrorCode::validation, "meeting duration must be non-negative");
  log.closed = true;
  log.duration_ms = duration_ms;
}

const MeetingStats& CaptureStore::finalize(const MeetingId& meeting) {
  auto& log = log_for(meeting);
  if (!log.closed) fail(ErrorCode::state, "meeting " + meeting.value + " is not closed");
  if (!log.stats) log.stats = aggregate(meeting, log.ordered, log.members, log.duration_ms);
  return *log.stats;
}

const MeetingStats* CaptureStore::stats(const MeetingId& meeting) const {
  const auto* log = find(meeting);
  return log && log->stats ? &*log->stats : nullptr;
}

std::span<const LoggedEvent> CaptureStore::events(const MeetingId& meeting) const {
  const auto* log = find(meeting);
  if (!log) return {};
  return log->ordered;
}

void to_json(nlohmann::json& j, const MeetingStats& stats) {
  auto participants = nlohmann::json::array();
  for (const auto& p : stats.participants)
    participants.push_back({{"user_id", p.speaking.user_id},
                            {"total_speaking_ms", p.speaking.total_speaking_ms},
                            {"present_ms", p.attendance.present_ms},
                            {"joined", p.attendance.joined},
                            {"data_complete", p.data_complete},
                            {"ignored_stops", p.ignored_stops},
                            {"ignored_leaves", p.ignored_leaves}});
  j = {{"meeting_id", stats.meeting_id},
       {"duration_ms", stats.duration_ms},
       {"participants", std::move(participants)}};
}

void from_json(const nlohmann::json& j, MeetingStats& stats) {
  stats.meeting_id = j.at("meeting_id").get<MeetingId>();
  stats.duration_ms = j.at("duration_ms").get<std::int64_t>();
  stats.participants.clear();
  for (const auto& p : j.at("participants")) {
    ParticipantStats ps;
    const auto user = p.at("user_id").get<UserId>();
    ps.speaking = {user, stats.meeting_id, p.at("total_speaking_ms").get<std::int64_t>()};
    ps.attendance = {user, stats.meeting_id, p.value("present_ms", std::int64_t{0}),
                     p.value("joined", false)};
    ps.data_complete = p.value("data_complete", true);
    ps.ignored_stops = p.value("ignored_stops", std::int64_t{0});
    ps.ignored_leaves = p.value("ignored_leaves", std::int64_t{0});
    stats.participants.push_back(std::move(ps));
  }
}

void to_json(nlohmann::json& j, const CaptureStore& store) {
  j = nlohmann::json::object();
  for (const auto& [meeting, log] : store.logs_) {
    auto events = nlohmann::json::array();
    for (const auto& e : log.ordered) events.push_back({e.user_id, e.kind, e.ts_ms, e.arrival});
    j[meeting.value] = {{"members", log.members},
                        {"events", std::move(events)},
                        {"arrivals", log.arrivals},
                        {"closed", log.closed},
                        {"duration_ms", log.duration_ms},
                        {"stats", log.stats ? nlohmann::json(*log.stats) : nlohmann::json(nullptr)}};
  }
}

void from_json(const nlohmann::json& j, CaptureStore& store) {
  store.logs_.clear();
  for (const auto& [key, value] : j.items()) {
    CaptureStore::MeetingLog log;
    log.members = value.at("members").get<std::vector<UserId>>();
    for (const auto& e : value.at("events")) {
      LoggedEvent le{e[0].get<UserId>(), e[1].get<EventKind>(), e[2].get<std::int64_t>(),
                     e[3].get<std::uint64_t>()};
      log.seen.insert({le.user_id.value, le.kind, le.ts_ms});
      log.ordered.push_back(std::move(le));
    }
    log.arrivals = value.at("arrivals").get<std::uint64_t>();
    log.closed = value.at("closed").get<bool>();
    log.duration_ms = value.at("duration_ms").get<std::int64_t>();
    if (!value.at("stats").is_null()) log.stats = value.at("stats").get<MeetingStats>();
    store.logs_.emplace(MeetingId{key}, std::move(log));
  }
}

}  // namespace huddle::capture
