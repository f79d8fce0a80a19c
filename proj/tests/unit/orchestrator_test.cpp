#include <gtest/gtest.h>

#include "huddle/common/error.hpp"
#include "huddle/orchestrator/orchestrator.hpp"

namespace huddle::orchestrator {
namespace {

ErrorCode code_of(auto&& fn, std::string* detail = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (detail) *detail = e.detail();
    return e.code();
  }
  ADD_FAILURE() << "expected huddle::Error";
  return ErrorCode::config;
}

TEST(Teams, CreateAndValidate) {
  Orchestrator o;
  const auto& t = o.create_team("T1", {"A", "B", "C"});
  EXPECT_EQ(t.member_ids.size(), 3u);
  EXPECT_EQ(o.user(t.member_ids[1]).display_name, "B");
  EXPECT_EQ(o.roster(t.team_id).members.size(), 3u);
  EXPECT_EQ(code_of([&] { o.create_team("T2", {"A"}); }), ErrorCode::validation);
  EXPECT_EQ(code_of([&] { o.create_team("T3", {"A", "A"}); }), ErrorCode::validation);
  EXPECT_EQ(code_of([&] { o.create_team("T4", {"A", " "}); }), ErrorCode::validation);
  EXPECT_EQ(o.teams().size(), 1u);
  EXPECT_EQ(o.users().size(), 3u);
}

TEST(Meetings, ScheduleRules) {
  Orchestrator o;
  auto team = o.create_team("T", {"A", "B"}).team_id;
  const auto& m0 = o.schedule_meeting(team, Condition::control, 0);
  EXPECT_EQ(m0.state, MeetingState::scheduled);
  EXPECT_EQ(code_of([&] { o.schedule_meeting(team, Condition::control, 0); }), ErrorCode::conflict);
  EXPECT_EQ(code_of([&] { o.schedule_meeting(team, Condition::control, 2); }), ErrorCode::validation);
  EXPECT_EQ(code_of([&] { o.schedule_meeting(team, Condition::control, -1); }), ErrorCode::validation);
  EXPECT_EQ(code_of([&] { o.schedule_meeting(TeamId{"team-9"}, Condition::control, 0); }), ErrorCode::not_found);
  EXPECT_EQ(o.schedule_meeting(team, Condition::treatment, 1).cycle_index, 1);
  // A first meeting may already be a treatment meeting.
  auto other = o.create_team("U", {"C", "D"}).team_id;
  EXPECT_EQ(o.schedule_meeting(other, Condition::treatment, 0).condition, Condition::treatment);
}

TEST(Meetings, OpenCloseLifecycle) {
  Orchestrator o;
  auto team = o.create_team("T", {"A", "B"}).team_id;
  auto m0 = o.schedule_meeting(team, Condition::control, 0).meeting_id;
  auto m1 = o.schedule_meeting(team, Condition::treatment, 1).meeting_id;
  EXPECT_EQ(code_of([&] { o.open_meeting(m1, 0); }), ErrorCode::state);  // previous not closed
  EXPECT_EQ(code_of([&] { o.close_meeting(m0, 0); }), ErrorCode::state);
  o.open_meeting(m0, 1000);
  EXPECT_EQ(code_of([&] { o.open_meeting(m0, 0); }), ErrorCode::state);
  const auto& closed = o.close_meeting(m0, 5000);
  EXPECT_EQ(closed.state, MeetingState::closed);
  EXPECT_GE(*closed.closed_at, *closed.opened_at);
  EXPECT_EQ(o.previous(o.meeting(m1))->meeting_id, m0);
  o.open_meeting(m1, 6000);
}

struct PhaseFixture : ::testing::Test {
  Orchestrator o;
  TeamId team = o.create_team("T", {"A", "B", "C"}).team_id;
  UserId a = o.team(team).member_ids[0];
  UserId b = o.team(team).member_ids[1];
  MeetingId control = o.schedule_meeting(team, Condition::control, 0).meeting_id;
  MeetingId treatment = o.schedule_meeting(team, Condition::treatment, 1).meeting_id;
};

TEST_F(PhaseFixture, HappyPathThroughAllPhases) {
  o.acknowledge_control(a, control);
  std::string detail;
  EXPECT_EQ(code_of([&] { o.advance_phase(a, control, false); }, &detail), ErrorCode::state);
  EXPECT_EQ(detail, "IN_MEETING");
  o.open_meeting(control, 0);
  EXPECT_EQ(o.advance_phase(a, control, false).phase, Phase::in_meeting);
  EXPECT_EQ(code_of([&] { o.advance_phase(a, control, false); }), ErrorCode::state);
  o.close_meeting(control, 10);
  EXPECT_EQ(o.advance_phase(a, control, false).phase, Phase::post_meeting);
  EXPECT_EQ(code_of([&] { o.advance_phase(a, control, false); }, &detail), ErrorCode::state);
  EXPECT_EQ(detail, "POST_MEETING");
  const auto& done = o.advance_phase(a, control, true);
  EXPECT_TRUE(done.completed);
  ASSERT_EQ(done.history.size(), 2u);
  EXPECT_TRUE(done.history[0].completed);
  EXPECT_TRUE(done.history[1].completed);
  EXPECT_EQ(code_of([&] { o.advance_phase(a, control, true); }), ErrorCode::state);
}

TEST_F(PhaseFixture, PendingPreMeetingNamesTheStep) {
  std::string detail;
  EXPECT_EQ(code_of([&] { o.advance_phase(a, control, false); }, &detail), ErrorCode::state);
  EXPECT_EQ(detail, "PRE_MEETING");
}

TEST_F(PhaseFixture, AcknowledgementOnlyForControl) {
  EXPECT_EQ(o.acknowledge_control(a, control).completed, true);
  EXPECT_EQ(code_of([&] { o.acknowledge_control(a, control); }), ErrorCode::state);
  EXPECT_EQ(code_of([&] { o.acknowledge_control(a, treatment); }), ErrorCode::state);
  EXPECT_EQ(code_of([&] { o.acknowledge_control(UserId{"user-9"}, control); }), ErrorCode::not_found);
  auto outsider = o.create_team("U", {"X", "Y"}).member_ids[0];
  EXPECT_EQ(code_of([&] { o.acknowledge_control(outsider, control); }), ErrorCode::authorization);
}

TEST_F(PhaseFixture, OpeningSkipsIncompletePreMeeting) {
  o.open_meeting(control, 0);
  const auto& p = o.advance_phase(b, control, false);
  EXPECT_EQ(p.phase, Phase::in_meeting);
  ASSERT_EQ(p.history.size(), 1u);
  EXPECT_FALSE(p.history[0].completed);
}

TEST_F(PhaseFixture, ClosedMeetingSkipsToPost) {
  o.open_meeting(control, 0);
  o.close_meeting(control, 1);
  const auto& p = o.advance_phase(b, control, false);
  EXPECT_EQ(p.phase, Phase::post_meeting);
  ASSERT_EQ(p.history.size(), 2u);
  EXPECT_EQ(p.history[1].phase, Phase::in_meeting);
  EXPECT_FALSE(p.history[1].completed);
  EXPECT_EQ(code_of([&] { o.complete_pre_meeting(b, control); }), ErrorCode::state);
}

TEST_F(PhaseFixture, JsonRoundTrip) {
  o.acknowledge_control(a, control);
  o.open_meeting(control, 3);
  o.advance_phase(a, control, false);
  nlohmann::json j = o;
  auto copy = j.get<Orchestrator>();
  EXPECT_EQ(nlohmann::json(copy), j);
  EXPECT_EQ(copy.create_team("Z", {"P", "Q"}).team_id.value, "team-2");
}

}  // namespace
}  // namespace huddle::orchestrator
