#include <gtest/gtest.h>

#include "huddle/service/replay.hpp"
#include "study_driver.hpp"

namespace huddle::service {
namespace {

using nlohmann::json;

const json* check_named(const json& report, const std::string& name) {
  for (const auto& c : report["checks"])
    if (c["name"] == name) return &c;
  return nullptr;
}

std::vector<std::string> scopes_for(const json& report, const std::string& recipient) {
  for (const auto& b : report["bundles"]) {
    if (b["recipient_id"] != recipient) continue;
    std::vector<std::string> out;
    for (const auto& item : b["items"]) out.push_back(item["scope"]);
    return out;
  }
  return {};
}

TEST(Replay, ReferenceStudyPasses) {
  auto outcome = replay_study(parse_scenario(testing::reference_scenario()));
  ASSERT_TRUE(outcome.ok) << outcome.report["diagnostics"].dump(2);
  const auto& r = outcome.report;
  ASSERT_EQ(r["restarts"].size(), 2u);
  for (const auto& restart : r["restarts"]) EXPECT_TRUE(restart["equivalent"].get<bool>());
  EXPECT_GT(r["events"].get<int>(), 50);
  for (const char* name : {"transition_graph", "no_ihp_in_control", "approval_gating", "adoption_before_transgression",
                           "bundle_anonymity", "agent_default_once_per_bundle", "ihp_prompt_anonymity",
                           "phase_order", "ihp_prompt_anonymity_during_run", "liveness",
                           "crash_restart_equivalence"}) {
    const auto* c = check_named(r, name);
    ASSERT_TRUE(c) << name;
    EXPECT_TRUE((*c)["ok"].get<bool>()) << name;
  }
  ASSERT_EQ(r["meetings"].size(), 2u);
  EXPECT_EQ(r["meetings"][0]["condition"], "CONTROL");
  EXPECT_EQ(r["meetings"][1]["condition"], "TREATMENT");

  // user-1 is Ada, user-3 Chiara: Ada got nothing but the agent's note, Chiara
  // got the group note and Bruno's direct one.
  EXPECT_EQ(scopes_for(r, "user-1"), (std::vector<std::string>{"AGENT_DEFAULT"}));
  EXPECT_EQ(scopes_for(r, "user-3"), (std::vector<std::string>{"EVERYONE", "TO_YOU", "AGENT_DEFAULT"}));
  EXPECT_EQ(r["bundles"].dump().find("Bruno"), std::string::npos);
}

TEST(Replay, SameScenarioSameReport) {
  const auto sc = parse_scenario(testing::reference_scenario());
  EXPECT_EQ(replay_study(sc).report, replay_study(sc).report);
}

TEST(Replay, CrashPointCanBeChosen) {
  auto j = testing::reference_scenario();
  for (int at : {1, 17, 40}) {
    j["crash_after_event"] = at;
    auto outcome = replay_study(parse_scenario(j));
    EXPECT_TRUE(outcome.ok) << at << outcome.report["diagnostics"].dump(2);
  }
}

TEST(Replay, StallIsReportedNotHung) {
  auto j = testing::reference_scenario();
  auto& treatment = j["teams"][0]["meetings"][1];
  for (auto& [name, msgs] : treatment["pre_meeting"].items()) msgs = {"Thanks.", "Sure, go on."};
  auto outcome = replay_study(parse_scenario(j));
  EXPECT_FALSE(outcome.ok);
  const auto diagnostics = outcome.report["diagnostics"].dump();
  EXPECT_NE(diagnostics.find("never proposed a goal"), std::string::npos) << diagnostics;
  EXPECT_FALSE((*check_named(outcome.report, "liveness"))["ok"].get<bool>());
}

TEST(Replay, DiscardedDraftsLeaveOnlyTheAgentNote) {
  auto j = testing::reference_scenario();
  for (auto& m : j["teams"][0]["meetings"]) m["approve_drafts"] = false;
  auto outcome = replay_study(parse_scenario(j));
  ASSERT_TRUE(outcome.ok) << outcome.report["diagnostics"].dump(2);
  for (const char* u : {"user-1", "user-2", "user-3"})
    EXPECT_EQ(scopes_for(outcome.report, u), (std::vector<std::string>{"AGENT_DEFAULT"})) << u;
}

TEST(ScenarioSchema, ErrorsPointAtTheField) {
  auto detail_of = [](json j) {
    try {
      parse_scenario(j);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::validation);
      return e.detail();
    }
    ADD_FAILURE() << "accepted " << j.dump();
    return std::string();
  };
  auto j = testing::reference_scenario();
  j["teams"][0]["meetings"][1]["condition"] = "PLACEBO";
  EXPECT_EQ(detail_of(j), "$.teams[0].meetings[1].condition");

  j = testing::reference_scenario();
  j["teams"][0]["meetings"][0]["events"][2]["kind"] = "WAVE";
  EXPECT_EQ(detail_of(j), "$.teams[0].meetings[0].events[2].kind");

  j = testing::reference_scenario();
  j["teams"][0]["meetings"][0]["events"][0]["user"] = "Stranger";
  EXPECT_EQ(detail_of(j), "$.teams[0].meetings[0].events[0].user");

  j = testing::reference_scenario();
  j.erase("mock_script");
  EXPECT_EQ(detail_of(j), "$.mock_script");
}

}  // namespace
}  // namespace huddle::service
