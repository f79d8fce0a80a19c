#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace huddle::service {

struct PersistedEvent {
  std::int64_t seq = 0;
  std::int64_t ts_ms = 0;
  std::string kind;
  nlohmann::json payload;
};

void to_json(nlohmann::json& j, const PersistedEvent& e);

/// One log line without the trailing newline: the event object plus a
/// "crc" member holding crc32 of the object serialized without it.
std::string encode_event(const PersistedEvent& e);
/// Throws corrupt_log on a checksum mismatch or malformed line.
PersistedEvent decode_event(const std::string& line);

struct Snapshot {
  std::int64_t seq = 0;
  nlohmann::json state;
};

/// events.jsonl plus snapshot-<seq>.json files in one directory.
class EventLog {
 public:
  struct Recovery {
    std::vector<PersistedEvent> events;
    std::optional<Snapshot> snapshot;
    std::vector<std::string> warnings;
  };

  EventLog(std::filesystem::path dir, bool fsync);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Reads everything on disk. A partial last line (no newline) is dropped
  /// from the file with a warning; anything else that does not check out
  /// throws corrupt_log. Must run before the first append.
  Recovery recover();

  void append(const PersistedEvent& e);
  void write_snapshot(const Snapshot& s);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path log_path() const { return dir_ / "events.jsonl"; }

  static constexpr int kSnapshotsKept = 2;

 private:
  void open_for_append();
  std::vector<std::pair<std::int64_t, std::filesystem::path>> snapshot_files() const;

  std::filesystem::path dir_;
  bool fsync_;
  std::FILE* out_ = nullptr;
};

}  // namespace huddle::service
