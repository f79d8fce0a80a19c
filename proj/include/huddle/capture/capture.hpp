#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/common/ids.hpp"

namespace huddle::capture {

enum class EventKind { join, leave, speak_start, speak_stop };

NLOHMANN_JSON_SERIALIZE_ENUM(EventKind, {
    {EventKind::join, "JOIN"},
    {EventKind::leave, "LEAVE"},
    {EventKind::speak_start, "SPEAK_START"},
    {EventKind::speak_stop, "SPEAK_STOP"},
})

struct VoiceActivityEvent {
  MeetingId meeting_id;
  UserId user_id;
  EventKind kind = EventKind::join;
  std::int64_t ts_ms = 0;  // since meeting open
};

struct SpeakingRecord {
  UserId user_id;
  MeetingId meeting_id;
  std::int64_t total_speaking_ms = 0;
};

struct AttendanceRecord {
  UserId user_id;
  MeetingId meeting_id;
  std::int64_t present_ms = 0;
  bool joined = false;
};

struct ParticipantStats {
  SpeakingRecord speaking;
  AttendanceRecord attendance;
  // False when the participant joined but their streams carried transitions
  // that could not be matched (stray stops or leaves). Metrics callers filter
  // on it.
  bool data_complete = true;
  std::int64_t ignored_stops = 0;
  std::int64_t ignored_leaves = 0;
};

struct MeetingStats {
  MeetingId meeting_id;
  std::int64_t duration_ms = 0;
  std::vector<ParticipantStats> participants;  // roster order

  const ParticipantStats* find(const UserId& id) const;
};

/// Position in the ordered per-meeting log: ts first, arrival second.
struct LoggedEvent {
  UserId user_id;
  EventKind kind = EventKind::join;
  std::int64_t ts_ms = 0;
  std::uint64_t arrival = 0;
};

/// Folds an ordered event log into per-member totals. Events past the end of
/// the meeting are clamped to it; intervals still running at the end close
/// there. Duplicate starts (or joins) are ignored, as are stops (or leaves)
/// with nothing open, which are counted instead.
MeetingStats aggregate(const MeetingId& meeting_id, std::span<const LoggedEvent> ordered,
                       std::span<const UserId> members, std::int64_t duration_ms);

/// Per-meeting voice-activity logs and their finalized aggregates.
class CaptureStore {
 public:
  void open_meeting(const MeetingId& meeting, std::vector<UserId> members);

  /// Returns false when the event exactly duplicates one already logged.
  bool ingest(const VoiceActivityEvent& event);

  /// Stops ingestion for the meeting. Further events are rejected.
  void close_meeting(const MeetingId& meeting, std::int64_t duration_ms);

  /// Computes (once) and returns the immutable stats of a closed meeting.
  const MeetingStats& finalize(const MeetingId& meeting);

  const MeetingStats* stats(const MeetingId& meeting) const;
  std::span<const LoggedEvent> events(const MeetingId& meeting) const;

  friend void to_json(nlohmann::json& j, const CaptureStore& store);
  friend void from_json(const nlohmann::json& j, CaptureStore& store);

 private:
  struct MeetingLog {
    std::vector<UserId> members;
    std::vector<LoggedEvent> ordered;
    std::set<std::tuple<std::string, EventKind, std::int64_t>> seen;
    std::uint64_t arrivals = 0;
    bool closed = false;
    std::int64_t duration_ms = 0;
    std::optional<MeetingStats> stats;
  };

  MeetingLog& log_for(const MeetingId& meeting);
  const MeetingLog* find(const MeetingId& meeting) const;

  std::map<MeetingId, MeetingLog> logs_;
};

void to_json(nlohmann::json& j, const MeetingStats& stats);
void from_json(const nlohmann::json& j, MeetingStats& stats);

}  // namespace huddle::capture
