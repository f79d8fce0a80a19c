#pragma once

// Random command streams for the service layer: a mix of valid and invalid
// operations that learns ids from earlier results.

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/common/error.hpp"
#include "huddle/llm/gateway.hpp"

namespace huddle::testing {

using nlohmann::json;

inline std::filesystem::path source_dir() { return HUDDLE_SOURCE_DIR; }

inline json reference_scenario() {
  std::ifstream in(source_dir() / "scenarios" / "reference_study.json");
  return json::parse(in);
}

class TempDir {
 public:
  TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "huddle-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& name_pool() {
  static const std::vector<std::string> names = {"Ingrid Solberg", "Tomasz Wierzba", "Oyelaran Ade", "Mireille Fabre",
                                                 "Kenji Arakawa", "Luz Restrepo",   "Piet Hendriks", "Saoirse Nolan"};
  return names;
}

// Message and draft texts never contain anyone's name.
inline const std::vector<std::string>& phrase_pool() {
  static const std::vector<std::string> phrases = {
      "I think it went fine overall.",
      "We ran out of time at the end.",
      "My goal is to listen more before answering.",
      "Someone could summarise the decisions next time.",
      "I felt a bit rushed when presenting.",
      "The agenda helped us stay on track.",
      "I usually jump in too fast when time is short.",
      "That's all from me.",
      "Could we leave more room for questions?",
      "Yes, that works for me."};
  return phrases;
}

/// Random directives straight from the engine's point of view, including
/// outages. Targets use the current roster's names so some drafts resolve.
class RandomBackend : public llm::AgentBackend {
 public:
  explicit RandomBackend(std::uint64_t seed) : rng(seed) {}

  llm::AgentDirective complete(const llm::AgentRequest&) override {
    const auto roll = pick(100);
    if (roll < 4) fail(ErrorCode::gateway_unavailable, "random outage");
    if (roll < 6) fail(ErrorCode::provider, "random provider failure", "400");
    llm::AgentDirective d;
    d.kind = static_cast<llm::DirectiveKind>(pick(5));
    d.reply_text = phrase_pool()[pick(phrase_pool().size())];
    d.text = phrase_pool()[pick(phrase_pool().size())];
    const auto t = pick(4 + targets.size());
    if (t == 1) d.target = "everyone";
    if (t == 2) d.target = "Nobody In Particular";
    if (t >= 4) d.target = targets[t - 4];
    d.parse_warning = pick(10) == 0;
    return d;
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

  std::mt19937_64 rng;
  std::vector<std::string> targets;
};

/// Drives any command executor (Core or Service) with random commands.
/// `exec` returns the result, or nullopt when the command was refused.
class StudyDriver {
 public:
  using Exec = std::function<std::optional<json>(const json&)>;

  StudyDriver(std::uint64_t seed, Exec exec) : rng_(seed), exec_(std::move(exec)) {}

  std::vector<std::string> display_names;  // of every member created so far

  /// Like step(), but only conversation traffic on recent sessions, drafts,
  /// goals and reflections.
  std::optional<json> converse() {
    if (sessions_.empty() && finished_.empty()) return step();
    static const std::size_t ops[] = {10, 10, 10, 10, 14, 14, 15, 16, 17};
    return step(ops[pick(std::size(ops))]);
  }

  std::optional<json> step() { return step(pick(20)); }

  std::optional<json> step(std::size_t op) {
    json cmd;
    if (op == 0 || teams_.empty()) {
      const auto n = 2 + pick(3);
      std::vector<std::string> members;
      for (std::size_t i = 0; i < n; ++i) members.push_back(name_pool()[(name_cursor_ + i) % name_pool().size()]);
      name_cursor_ += n;
      cmd = {{"op", "create_team"}, {"name", "team " + std::to_string(teams_.size())}, {"members", members}};
      auto r = exec_(cmd);
      if (r) {
        Team t{r->at("team_id").get<std::string>(), {}, 0, {}, 0};
        for (const auto& m : r->at("members")) {
          t.users.push_back(m.at("user_id").get<std::string>());
          display_names.push_back(m.at("display_name").get<std::string>());
        }
        teams_.push_back(t);
      }
      return r;
    }
    auto& team = teams_[pick(teams_.size())];
    const auto user = pick(12) == 0 ? std::string("user-999") : team.users[pick(team.users.size())];
    const auto meeting = any_meeting(team);

    switch (op) {
      case 1:
      case 2: {
        const int cycle = pick(8) == 0 ? team.next_cycle + 1 : team.next_cycle;
        cmd = {{"op", "schedule_meeting"},
               {"team_id", team.id},
               {"condition", pick(2) ? "TREATMENT" : "CONTROL"},
               {"cycle_index", cycle}};
        auto r = exec_(cmd);
        if (r) {
          team.meetings.push_back(r->at("meeting_id").get<std::string>());
          ++team.next_cycle;
        }
        return r;
      }
      case 3:
      case 4: {
        const bool open = op == 3;
        cmd = {{"op", open ? "open_meeting" : "close_meeting"}, {"meeting_id", meeting}};
        auto r = exec_(cmd);
        if (r && !open) team.closed = std::max(team.closed, index_of(team, meeting) + 1);
        return r;
      }
      case 5: cmd = {{"op", "acknowledge"}, {"user_id", user}, {"meeting_id", meeting}}; break;
      case 6: cmd = {{"op", "advance_phase"}, {"user_id", user}, {"meeting_id", meeting}}; break;
      case 7: {
        static const char* kinds[] = {"JOIN", "LEAVE", "SPEAK_START", "SPEAK_STOP"};
        cmd = {{"op", "ingest_event"},
               {"meeting_id", meeting},
               {"user_id", user},
               {"kind", kinds[pick(4)]},
               {"ts_ms", static_cast<std::int64_t>(pick(60000))}};
        break;
      }
      case 8:
      case 9: {
        const bool ihp = pick(2);
        cmd = {{"op", "start_conversation"},
               {"kind", ihp ? "IHP" : "SOLICITATION"},
               {"user_id", user},
               {"meeting_id", ihp || team.closed == 0 || pick(4) == 0 ? meeting : team.meetings[team.closed - 1]}};
        auto r = exec_(cmd);
        if (r) sessions_.push_back(r->at("session_id").get<std::string>());
        return r;
      }
      case 10:
      case 11:
      case 12:
      case 13: {
        if (sessions_.empty() && finished_.empty()) return std::nullopt;
        cmd = {{"op", "send_message"},
               {"session_id", pick(4) || finished_.empty() ? pick_from(sessions_, "session")
                                                            : finished_[pick(finished_.size())]},
               {"text", phrase_pool()[pick(phrase_pool().size())]}};
        auto r = exec_(cmd);
        if (r && r->at("state") == "COMPLETE") {
          const auto sid = cmd["session_id"].get<std::string>();
          finished_.push_back(sid);
          sessions_.erase(std::remove(sessions_.begin(), sessions_.end(), sid), sessions_.end());
        }
        if (r) {
          if (r->at("draft_id").is_string()) drafts_.push_back(r->at("draft_id").get<std::string>());
          if (r->at("goal_id").is_string()) goals_.push_back(r->at("goal_id").get<std::string>());
          if (r->at("reflection_id").is_string()) reflections_.push_back(r->at("reflection_id").get<std::string>());
        }
        return r;
      }
      case 14:
      case 15: cmd = {{"op", pick(3) ? "approve_draft" : "discard_draft"}, {"draft_id", pick_from(drafts_, "draft")}}; break;
      case 16: cmd = {{"op", "adopt_goal"}, {"goal_id", pick_from(goals_, "goal")}}; break;
      case 17: cmd = {{"op", "approve_reflection"}, {"reflection_id", pick_from(reflections_, "reflection")}}; break;
      case 18:
        cmd = {{"op", "submit_questionnaire"},
               {"user_id", user},
               {"instrument", "influence"},
               {"labels", {"q1"}},
               {"values", {static_cast<double>(1 + pick(7))}}};
        break;
      default: cmd = {{"op", "no_such_op"}}; break;
    }
    return exec_(cmd);
  }

 private:
  struct Team {
    std::string id;
    std::vector<std::string> users;
    int next_cycle = 0;
    std::vector<std::string> meetings;
    std::size_t closed = 0;  // meetings[0, closed) are known to be closed
  };

  static std::size_t index_of(const Team& t, const std::string& meeting) {
    return static_cast<std::size_t>(std::find(t.meetings.begin(), t.meetings.end(), meeting) - t.meetings.begin());
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  std::string any_meeting(const Team& t) {
    if (t.meetings.empty() || pick(15) == 0) return "meeting-999";
    // Mostly the first meeting not yet closed, since only it can progress.
    const auto n = t.meetings.size();
    if (t.closed < n && pick(3) != 0) return t.meetings[t.closed];
    return t.meetings[n - 1 - std::min(n - 1, pick(3) == 0 ? pick(n) : 0)];
  }

  std::string pick_from(const std::vector<std::string>& ids, const std::string& prefix) {
    if (ids.empty() || pick(10) == 0) return prefix + "-999";
    return ids[ids.size() - 1 - pick(std::min<std::size_t>(ids.size(), 3))];
  }

  std::mt19937_64 rng_;
  Exec exec_;
  std::vector<Team> teams_;
  std::vector<std::string> sessions_, finished_;  // finished: seen COMPLETE
  std::vector<std::string> drafts_, goals_, reflections_;
  std::size_t name_cursor_ = 0;
};

}  // namespace huddle::testing
