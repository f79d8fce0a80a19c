#include "huddle/service/event_log.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "huddle/common/error.hpp"

namespace huddle::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t checksum(const std::string& s) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

void write_all(std::FILE* f, const std::string& data, bool sync, const fs::path& where) {
  if (std::fwrite(data.data(), 1, data.size(), f) != data.size() || std::fflush(f) != 0)
    fail(ErrorCode::corrupt_log, "write failed", where.string());
  if (sync && ::fsync(::fileno(f)) != 0) fail(ErrorCode::corrupt_log, "fsync failed", where.string());
}

}  // namespace

void to_json(json& j, const PersistedEvent& e) {
  j = {{"seq", e.seq}, {"ts_ms", e.ts_ms}, {"kind", e.kind}, {"payload", e.payload}};
}

std::string encode_event(const PersistedEvent& e) {
  json j = e;
  j["crc"] = checksum(j.dump());
  return j.dump();
}

PersistedEvent decode_event(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& ex) {
    fail(ErrorCode::corrupt_log, std::string("unparseable log line: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("crc") || !j["crc"].is_number_unsigned())
    fail(ErrorCode::corrupt_log, "log line has no checksum");
  const auto crc = j["crc"].get<std::uint32_t>();
  j.erase("crc");
  if (checksum(j.dump()) != crc) fail(ErrorCode::corrupt_log, "checksum mismatch");
  try {
    return {j.at("seq").get<std::int64_t>(), j.at("ts_ms").get<std::int64_t>(), j.at("kind").get<std::string>(),
            j.at("payload")};
  } catch (const json::exception& ex) {
    fail(ErrorCode::corrupt_log, std::string("malformed event: ") + ex.what());
  }
}

EventLog::EventLog(fs::path dir, bool fsync) : dir_(std::move(dir)), fsync_(fsync) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec || !fs::is_directory(dir_))
    fail(ErrorCode::config, "persistence directory is not usable: " + ec.message(), dir_.string());
  const auto probe = dir_ / ".write-probe";
  {
    std::ofstream p(probe);
    if (!p) fail(ErrorCode::config, "persistence directory is not writable", dir_.string());
  }
  fs::remove(probe, ec);
}

EventLog::~EventLog() {
  if (out_) std::fclose(out_);
}

std::vector<std::pair<std::int64_t, fs::path>> EventLog::snapshot_files() const {
  std::vector<std::pair<std::int64_t, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("snapshot-", 0) != 0 || entry.path().extension() != ".json") continue;
    const auto digits = name.substr(9, name.size() - 9 - 5);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    out.emplace_back(std::stoll(digits), entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

EventLog::Recovery EventLog::recover() {
  Recovery r;
  const auto path = log_path();
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < data.size()) {
      const auto nl = data.find('\n', pos);
      if (nl == std::string::npos) {
        r.warnings.push_back("discarded partial last line of " + path.filename().string() + " (" +
                             std::to_string(data.size() - pos) + " bytes)");
        fs::resize_file(path, pos);
        break;
      }
      ++line_no;
      const auto line = data.substr(pos, nl - pos);
      pos = nl + 1;
      PersistedEvent e;
      try {
        e = decode_event(line);
      } catch (const Error& err) {
        fail(ErrorCode::corrupt_log, std::string(err.what()) + " at line " + std::to_string(line_no),
             path.string());
      }
      const auto expected = r.events.empty() ? 1 : r.events.back().seq + 1;
      if (e.seq != expected)
        fail(ErrorCode::corrupt_log,
             "sequence gap at line " + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                 ", found " + std::to_string(e.seq),
             path.string());
      r.events.push_back(std::move(e));
    }
  }

  auto snaps = snapshot_files();
  for (auto it = snaps.rbegin(); it != snaps.rend(); ++it) {
    try {
      std::ifstream in(it->second);
      const auto j = json::parse(in);
      const auto crc = j.at("crc").get<std::uint32_t>();
      if (checksum(j.at("state").dump()) != crc) fail(ErrorCode::corrupt_log, "checksum mismatch");
      if (j.at("seq").get<std::int64_t>() != it->first) fail(ErrorCode::corrupt_log, "seq does not match name");
      r.snapshot = Snapshot{it->first, j.at("state")};
      break;
    } catch (const std::exception& ex) {
      r.warnings.push_back("ignored unreadable snapshot " + it->second.filename().string() + ": " + ex.what());
    }
  }
  const auto last = r.events.empty() ? 0 : r.events.back().seq;
  if (r.snapshot && r.snapshot->seq > last)
    fail(ErrorCode::corrupt_log,
         "snapshot at seq " + std::to_string(r.snapshot->seq) + " is ahead of the log (last seq " +
             std::to_string(last) + ")",
         dir_.string());
  open_for_append();
  return r;
}

void EventLog::open_for_append() {
  if (out_) return;
  out_ = std::fopen(log_path().c_str(), "ab");
  if (!out_) fail(ErrorCode::config, "cannot open event log for writing", log_path().string());
}

void EventLog::append(const PersistedEvent& e) {
  open_for_append();
  write_all(out_, encode_event(e) + "\n", fsync_, log_path());
}

void EventLog::write_snapshot(const Snapshot& s) {
  const json j = {{"seq", s.seq}, {"crc", checksum(s.state.dump())}, {"state", s.state}};
  const auto final_path = dir_ / ("snapshot-" + std::to_string(s.seq) + ".json");
  const auto tmp = dir_ / ("snapshot-" + std::to_string(s.seq) + ".json.tmp");
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) fail(ErrorCode::corrupt_log, "cannot write snapshot", tmp.string());
  try {
    write_all(f, j.dump(), fsync_, tmp);
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
  fs::rename(tmp, final_path);
  auto snaps = snapshot_files();
  std::error_code ec;
  for (std::size_t i = 0; i + kSnapshotsKept < snaps.size(); ++i) fs::remove(snaps[i].second, ec);
}

}  // namespace huddle::service
