#include "huddle/service/replay.hpp"

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <memory>

#include "huddle/common/error.hpp"
#include "huddle/llm/mock_provider.hpp"
#include "huddle/metrics/report.hpp"
#include "huddle/service/service.hpp"

namespace huddle::service {

namespace fs = std::filesystem;
using nlohmann::json;
using conversation::SessionKind;
using conversation::State;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(ErrorCode::validation, "scenario " + path + ": " + what, path);
}

const json& member(const json& j, const std::string& path, const char* key) {
  if (!j.is_object()) bad(path, "expected an object");
  if (!j.contains(key)) bad(path + "." + key, "missing");
  return j[key];
}

std::string string_at(const json& j, const std::string& path) {
  if (!j.is_string() || j.get<std::string>().empty()) bad(path, "expected a non-empty string");
  return j.get<std::string>();
}

std::int64_t int_at(const json& j, const std::string& path, std::int64_t lo = 0) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < lo) bad(path, "expected an integer >= " + std::to_string(lo));
  return j.get<std::int64_t>();
}

std::map<std::string, std::vector<std::string>> scripts_at(const json& j, const std::string& path,
                                                          const std::vector<std::string>& members) {
  std::map<std::string, std::vector<std::string>> out;
  if (!j.is_object()) bad(path, "expected an object keyed by member name");
  for (const auto& [name, msgs] : j.items()) {
    const auto p = path + "." + name;
    if (std::find(members.begin(), members.end(), name) == members.end()) bad(p, "not a member of the team");
    if (!msgs.is_array()) bad(p, "expected an array of messages");
    for (std::size_t i = 0; i < msgs.size(); ++i) out[name].push_back(string_at(msgs[i], p + "[" + std::to_string(i) + "]"));
  }
  return out;
}

bool contains_ci(const std::string& hay, const std::string& needle) {
  if (needle.empty()) return false;
  auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
  });
  return it != hay.end();
}

// Every teammate other than `self`, as the strings that would identify them.
std::vector<std::string> identifiers(const Roster& roster, const std::optional<UserId>& self) {
  std::vector<std::string> out;
  for (const auto& m : roster.members) {
    if (self && m.user_id == *self) continue;
    out.push_back(m.user_id.value);
    out.push_back(m.display_name);
  }
  return out;
}

std::string first_difference(const json& a, const json& b, const std::string& path = "$") {
  if (a == b) return {};
  if (a.is_object() && b.is_object()) {
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) return path + "." + k + " missing after restart";
      auto d = first_difference(v, b[k], path + "." + k);
      if (!d.empty()) return d;
    }
    return path + " has extra keys after restart";
  }
  if (a.is_array() && b.is_array() && a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      auto d = first_difference(a[i], b[i], path + "[" + std::to_string(i) + "]");
      if (!d.empty()) return d;
    }
  }
  return path + " differs";
}

class TempDir {
 public:
  TempDir() {
    auto pattern = (fs::temp_directory_path() / "huddle-replay-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) fail(ErrorCode::config, "cannot create a temporary directory");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace

Scenario parse_scenario(const json& j, const fs::path& base_dir) {
  Scenario s;
  if (!j.is_object()) bad("$", "expected an object");
  s.name = j.contains("name") ? string_at(j["name"], "$.name") : "scenario";
  if (j.contains("start_ms")) s.start_ms = int_at(j["start_ms"], "$.start_ms");
  if (j.contains("crash_after_event")) s.crash_after_event = int_at(j["crash_after_event"], "$.crash_after_event", 1);
  if (j.contains("mock_script")) {
    s.mock_script = j["mock_script"];
  } else if (j.contains("mock_script_file")) {
    auto p = fs::path(string_at(j["mock_script_file"], "$.mock_script_file"));
    if (p.is_relative()) p = base_dir / p;
    std::ifstream in(p);
    if (!in) bad("$.mock_script_file", "cannot read " + p.string());
    try {
      s.mock_script = json::parse(in);
    } catch (const json::exception& e) {
      bad("$.mock_script_file", e.what());
    }
  } else {
    bad("$.mock_script", "missing (or give mock_script_file)");
  }
  try {
    llm::ScriptedMockProvider check(s.mock_script);
  } catch (const Error& e) {
    bad("$.mock_script", e.what());
  }

  const auto& teams = member(j, "$", "teams");
  if (!teams.is_array() || teams.empty()) bad("$.teams", "expected a non-empty array");
  for (std::size_t t = 0; t < teams.size(); ++t) {
    const auto tp = "$.teams[" + std::to_string(t) + "]";
    ScenarioTeam team;
    team.name = string_at(member(teams[t], tp, "name"), tp + ".name");
    const auto& members = member(teams[t], tp, "members");
    if (!members.is_array() || members.size() < 2) bad(tp + ".members", "expected at least two names");
    for (std::size_t i = 0; i < members.size(); ++i)
      team.members.push_back(string_at(members[i], tp + ".members[" + std::to_string(i) + "]"));
    const auto& meetings = member(teams[t], tp, "meetings");
    if (!meetings.is_array() || meetings.empty()) bad(tp + ".meetings", "expected a non-empty array");
    for (std::size_t m = 0; m < meetings.size(); ++m) {
      const auto mp = tp + ".meetings[" + std::to_string(m) + "]";
      const auto& mj = meetings[m];
      ScenarioMeeting meeting;
      const auto cond = string_at(member(mj, mp, "condition"), mp + ".condition");
      if (cond == "CONTROL") {
        meeting.condition = Condition::control;
      } else if (cond == "TREATMENT") {
        meeting.condition = Condition::treatment;
      } else {
        bad(mp + ".condition", "expected CONTROL or TREATMENT");
      }
      meeting.duration_ms = int_at(member(mj, mp, "duration_ms"), mp + ".duration_ms", 1);
      const auto& events = member(mj, mp, "events");
      if (!events.is_array()) bad(mp + ".events", "expected an array");
      for (std::size_t e = 0; e < events.size(); ++e) {
        const auto ep = mp + ".events[" + std::to_string(e) + "]";
        ScenarioMeeting::Event ev;
        ev.user = string_at(member(events[e], ep, "user"), ep + ".user");
        if (std::find(team.members.begin(), team.members.end(), ev.user) == team.members.end())
          bad(ep + ".user", "not a member of the team");
        ev.kind = string_at(member(events[e], ep, "kind"), ep + ".kind");
        static const std::vector<std::string> kinds = {"JOIN", "LEAVE", "SPEAK_START", "SPEAK_STOP"};
        if (std::find(kinds.begin(), kinds.end(), ev.kind) == kinds.end())
          bad(ep + ".kind", "expected JOIN, LEAVE, SPEAK_START or SPEAK_STOP");
        ev.ts_ms = int_at(member(events[e], ep, "ts_ms"), ep + ".ts_ms");
        meeting.events.push_back(ev);
      }
      if (mj.contains("pre_meeting")) {
        if (meeting.condition == Condition::control)
          bad(mp + ".pre_meeting", "control meetings have no pre-meeting conversation");
        meeting.pre_meeting = scripts_at(mj["pre_meeting"], mp + ".pre_meeting", team.members);
      }
      if (mj.contains("post_meeting"))
        meeting.post_meeting = scripts_at(mj["post_meeting"], mp + ".post_meeting", team.members);
      if (mj.contains("approve_drafts")) {
        if (!mj["approve_drafts"].is_boolean()) bad(mp + ".approve_drafts", "expected a boolean");
        meeting.approve_drafts = mj["approve_drafts"].get<bool>();
      }
      team.meetings.push_back(std::move(meeting));
    }
    s.teams.push_back(std::move(team));
  }
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::validation, "cannot read scenario file", path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::validation, std::string("scenario is not valid JSON: ") + e.what(), "$");
  }
  return parse_scenario(j, path.parent_path());
}

std::vector<Check> check_protocol(const Core& core, const llm::TemplateRegistry& templates) {
  const auto& orch = core.orchestrator();
  const auto& engine = core.engine();
  const auto& router = core.router();

  Check graph{"transition_graph"};
  Check control{"no_ihp_in_control"};
  Check gating{"approval_gating"};
  Check adoption{"adoption_before_transgression"};
  Check anonymity{"bundle_anonymity"};
  Check defaults{"agent_default_once_per_bundle"};
  Check prompts{"ihp_prompt_anonymity"};
  Check phases{"phase_order"};

  for (const auto& [id, s] : engine.sessions()) {
    auto prev = State::init;
    for (const auto& turn : s.transcript) {
      if (turn.state_after != prev && !conversation::is_declared_edge(s.kind, prev, turn.state_after))
        graph.failures.push_back(id.value + ": " + json(prev).get<std::string>() + " -> " +
                                 json(turn.state_after).get<std::string>());
      prev = turn.state_after;
    }
    if (prev != s.state) graph.failures.push_back(id.value + ": transcript ends in a state other than the session's");

    const auto& meeting = orch.meeting(s.meeting_id);
    if (s.kind == SessionKind::ihp && meeting.condition == Condition::control)
      control.failures.push_back(id.value + " runs in control meeting " + meeting.meeting_id.value);

    if (s.kind == SessionKind::ihp) {
      const bool past_adoption = s.state == State::transgression_elicitation ||
                                 s.state == State::await_reflection_approval || s.state == State::complete;
      const bool adopted = std::any_of(engine.goals().begin(), engine.goals().end(), [&](const auto& g) {
        return g.second.session_id == id && g.second.status == conversation::GoalStatus::adopted;
      });
      if (past_adoption && !adopted) adoption.failures.push_back(id.value + " reached " +
                                                                 json(s.state).get<std::string>() +
                                                                 " without an adopted goal");
      if (s.state != State::complete) {
        const auto prompt = engine.current_prompt(id, templates);
        for (const auto& ident : identifiers(orch.roster(meeting.team_id), s.user_id))
          if (contains_ci(prompt, ident)) prompts.failures.push_back(id.value + " prompt mentions " + ident);
      }
    }
  }

  for (const auto& [id, r] : engine.reflections()) {
    const auto& g = engine.goals().at(r.goal_id);
    if (g.status != conversation::GoalStatus::adopted)
      adoption.failures.push_back(id.value + " reflects on goal " + g.goal_id.value + " which was never adopted");
  }

  for (const auto& rec : router.records()) {
    const auto it = std::find_if(engine.drafts().begin(), engine.drafts().end(), [&](const auto& d) {
      return d.second.record_id && *d.second.record_id == rec.record_id;
    });
    if (it == engine.drafts().end() || it->second.status != conversation::DraftStatus::approved)
      gating.failures.push_back(rec.record_id.value + " has no approved draft behind it");
  }

  for (const auto& [key, bundle] : router.bundles()) {
    const auto items = json(bundle.items).dump();
    const auto& meeting = orch.meeting(bundle.meeting_id);
    for (const auto& ident : identifiers(orch.roster(meeting.team_id), std::nullopt))
      if (contains_ci(items, ident))
        anonymity.failures.push_back("bundle for " + bundle.recipient_id.value + " in " +
                                     bundle.meeting_id.value + " mentions " + ident);
    const auto n = std::count_if(bundle.items.begin(), bundle.items.end(),
                                 [](const auto& i) { return i.scope == router::ItemScope::agent_default; });
    if (n != 1)
      defaults.failures.push_back("bundle for " + bundle.recipient_id.value + " in " + bundle.meeting_id.value +
                                  " has " + std::to_string(n) + " default items");
  }

  for (const auto& [mid, m] : orch.meetings()) {
    for (const auto& uid : orch.team(m.team_id).member_ids) {
      const auto p = orch.phase(uid, mid);
      auto last = -1;
      for (const auto& step : p.history) {
        if (static_cast<int>(step.phase) <= last)
          phases.failures.push_back(uid.value + "/" + mid.value + ": history out of order");
        last = static_cast<int>(step.phase);
      }
      if (static_cast<int>(p.phase) <= last)
        phases.failures.push_back(uid.value + "/" + mid.value + ": current phase precedes its history");
    }
  }

  std::vector<Check> out = {graph, control, gating, adoption, anonymity, defaults, prompts, phases};
  for (auto& c : out) c.ok = c.failures.empty();
  return out;
}

ReplayOutcome replay_study(const Scenario& sc, const ReplayOptions& options) {
  std::optional<TempDir> temp;
  fs::path dir = options.work_dir;
  if (dir.empty()) {
    temp.emplace();
    dir = temp->path();
  }

  std::int64_t clock = sc.start_ms;
  const auto templates = llm::TemplateRegistry::builtin();
  auto gateway = std::make_shared<llm::Gateway>(std::make_shared<llm::ScriptedMockProvider>(sc.mock_script),
                                                templates, llm::GatewayConfig{}, [](llm::Millis) {});
  ServiceOptions so;
  so.data_dir = dir;
  so.snapshot_every = options.snapshot_every;
  so.clock = [&clock] { return clock; };
  auto service = std::make_unique<Service>(so, gateway);

  json diagnostics = json::array();
  json restarts = json::array();
  std::vector<Check> checks;
  Check liveness{"liveness"};
  Check restart_check{"crash_restart_equivalence"};
  Check prompt_scan{"ihp_prompt_anonymity_during_run"};
  bool crashed = false;

  auto restart = [&](const std::string& label) {
    const auto before = service->state();
    const auto seq = service->last_seq();
    service.reset();
    service = std::make_unique<Service>(so, gateway);
    const auto after = service->state();
    const bool same = before == after && service->last_seq() == seq;
    restarts.push_back({{"label", label},
                        {"after_seq", seq},
                        {"replayed_events", service->replayed_events()},
                        {"warnings", service->recovery_warnings()},
                        {"equivalent", same}});
    if (!same) restart_check.failures.push_back(label + ": " + first_difference(before, after));
  };

  auto exec = [&](json cmd) {
    clock += 1000;
    auto r = service->execute(cmd);
    if (!crashed && sc.crash_after_event && service->last_seq() >= *sc.crash_after_event) {
      crashed = true;
      restart("mid-run crash after event " + std::to_string(service->last_seq()));
    }
    return r;
  };

  auto scan_prompt = [&](const SessionId& sid) {
    service->read([&](const Core& core) {
      const auto& s = core.engine().session(sid);
      if (s.state == State::complete) return 0;
      const auto prompt = core.prompt_for(sid, templates);
      const auto& m = core.orchestrator().meeting(s.meeting_id);
      for (const auto& ident : identifiers(core.orchestrator().roster(m.team_id), s.user_id))
        if (contains_ci(prompt, ident)) prompt_scan.failures.push_back(sid.value + " prompt mentions " + ident);
      return 0;
    });
  };

  auto run_ihp = [&](const std::string& who, const json& started, const std::vector<std::string>& script) {
    const SessionId sid{started.at("session_id").get<std::string>()};
    auto state = started.at("state").get<State>();
    bool proposed = false;
    for (const auto& msg : script) {
      if (state == State::complete) break;
      scan_prompt(sid);
      auto r = exec({{"op", "send_message"}, {"session_id", sid.value}, {"text", msg}});
      state = r.at("state").get<State>();
      if (state == State::await_adoption && r.at("goal_id").is_string()) {
        proposed = true;
        exec({{"op", "adopt_goal"}, {"goal_id", r["goal_id"]}});
        state = State::transgression_elicitation;
      } else if (state == State::await_reflection_approval && r.at("reflection_id").is_string()) {
        auto a = exec({{"op", "approve_reflection"}, {"reflection_id", r["reflection_id"]}});
        state = a.at("session_state").get<State>();
      }
    }
    if (state == State::complete) return;
    const auto st = json(state).get<std::string>();
    if (!proposed && (state == State::present_feedback || state == State::goal_elicitation)) {
      liveness.failures.push_back("protocol stall: the agent never proposed a goal to " + who + " (session " +
                                  sid.value + ", stuck in " + st + " after " + std::to_string(script.size()) +
                                  " messages)");
    } else {
      liveness.failures.push_back("protocol stall: goal-setting conversation with " + who + " (session " +
                                  sid.value + ") ended its script in " + st);
    }
  };

  auto run_solicitation = [&](const std::string& who, const json& started, const std::vector<std::string>& script,
                              bool approve) {
    const SessionId sid{started.at("session_id").get<std::string>()};
    auto state = started.at("state").get<State>();
    for (const auto& msg : script) {
      if (state == State::complete) break;
      auto r = exec({{"op", "send_message"}, {"session_id", sid.value}, {"text", msg}});
      state = r.at("state").get<State>();
      if (state == State::await_approval && r.at("draft_id").is_string()) {
        exec({{"op", approve ? "approve_draft" : "discard_draft"}, {"draft_id", r["draft_id"]}});
        state = approve ? State::probing : State::drafting;
      }
    }
    if (state != State::complete)
      liveness.failures.push_back("protocol stall: feedback conversation with " + who + " (session " + sid.value +
                                  ") ended its script in " + json(state).get<std::string>());
    return state == State::complete;
  };

  std::vector<MeetingId> closed;
  bool aborted = false;
  try {
    for (std::size_t ti = 0; ti < sc.teams.size(); ++ti) {
      const auto& team = sc.teams[ti];
      auto t = exec({{"op", "create_team"}, {"name", team.name}, {"members", team.members}});
      const auto team_id = t.at("team_id").get<std::string>();
      std::map<std::string, std::string> ids;
      for (const auto& m : t.at("members")) ids[m.at("display_name")] = m.at("user_id");

      for (std::size_t mi = 0; mi < team.meetings.size(); ++mi) {
        const auto& meeting = team.meetings[mi];
        auto m = exec({{"op", "schedule_meeting"},
                       {"team_id", team_id},
                       {"condition", meeting.condition},
                       {"cycle_index", mi}});
        const auto mid = m.at("meeting_id").get<std::string>();

        for (const auto& name : team.members) {
          if (meeting.condition == Condition::control) {
            exec({{"op", "acknowledge"}, {"user_id", ids[name]}, {"meeting_id", mid}});
          } else {
            auto s = exec({{"op", "start_conversation"}, {"kind", "IHP"}, {"user_id", ids[name]}, {"meeting_id", mid}});
            auto it = meeting.pre_meeting.find(name);
            run_ihp(name, s, it == meeting.pre_meeting.end() ? std::vector<std::string>{} : it->second);
          }
        }

        exec({{"op", "open_meeting"}, {"meeting_id", mid}});
        for (const auto& name : team.members)
          exec({{"op", "advance_phase"}, {"user_id", ids[name]}, {"meeting_id", mid}});
        for (const auto& e : meeting.events)
          exec({{"op", "ingest_event"}, {"meeting_id", mid}, {"user_id", ids[e.user]}, {"kind", e.kind},
                {"ts_ms", e.ts_ms}});
        exec({{"op", "close_meeting"}, {"meeting_id", mid}, {"duration_ms", meeting.duration_ms}});
        closed.emplace_back(mid);
        for (const auto& name : team.members)
          exec({{"op", "advance_phase"}, {"user_id", ids[name]}, {"meeting_id", mid}});

        for (const auto& name : team.members) {
          auto s = exec(
              {{"op", "start_conversation"}, {"kind", "SOLICITATION"}, {"user_id", ids[name]}, {"meeting_id", mid}});
          auto it = meeting.post_meeting.find(name);
          if (run_solicitation(name, s, it == meeting.post_meeting.end() ? std::vector<std::string>{} : it->second,
                               meeting.approve_drafts))
            exec({{"op", "advance_phase"}, {"user_id", ids[name]}, {"meeting_id", mid}});
        }

        if (!crashed && !sc.crash_after_event && ti == 0 && mi == 0) {
          crashed = true;
          restart("mid-run crash after the first meeting cycle");
        }
      }
    }
  } catch (const Error& e) {
    aborted = true;
    diagnostics.push_back(std::string("run aborted: ") + std::string(to_string(e.code())) + ": " + e.what() +
                          (e.detail().empty() ? "" : " (" + e.detail() + ")"));
  }

  restart("final restart");

  json meetings = json::array();
  json bundles = json::array();
  service->read([&](const Core& core) {
    checks = check_protocol(core, templates);
    for (const auto& id : closed) meetings.push_back(core.meeting_stats(id));
    for (const auto& [key, b] : core.router().bundles()) bundles.push_back(b);
    return 0;
  });
  prompt_scan.ok = prompt_scan.failures.empty();
  liveness.ok = liveness.failures.empty();
  restart_check.ok = restart_check.failures.empty();
  checks.push_back(prompt_scan);
  checks.push_back(liveness);
  checks.push_back(restart_check);

  json metrics = nullptr;
  try {
    metrics = metrics::build_report(meetings, {});
  } catch (const Error& e) {
    diagnostics.push_back(std::string("metrics failed: ") + e.what());
  }

  bool ok = !aborted && !metrics.is_null();
  json check_list = json::array();
  for (const auto& c : checks) {
    ok = ok && c.ok;
    check_list.push_back({{"name", c.name}, {"ok", c.ok}, {"failures", c.failures}});
    for (const auto& f : c.failures) diagnostics.push_back(c.name + ": " + f);
  }

  json report = {{"scenario", sc.name},
                 {"ok", ok},
                 {"events", service->last_seq()},
                 {"restarts", restarts},
                 {"checks", check_list},
                 {"diagnostics", diagnostics},
                 {"meetings", meetings},
                 {"bundles", bundles},
                 {"metrics", metrics}};
  return {ok, report};
}

}  // namespace huddle::service
