#include <deque>
#include <random>

#include <gtest/gtest.h>

#include "huddle/common/error.hpp"
#include "huddle/conversation/engine.hpp"
#include "huddle/llm/mock_provider.hpp"

namespace huddle::conversation {
namespace {

using llm::AgentDirective;
using llm::DirectiveKind;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected huddle::Error";
  return ErrorCode::config;
}

// Hands out queued directives; an empty queue means a gateway outage.
class QueueBackend : public llm::AgentBackend {
 public:
  AgentDirective complete(const llm::AgentRequest& request) override {
    requests.push_back(request);
    if (queue.empty()) fail(ErrorCode::gateway_unavailable, "no more scripted replies");
    auto d = queue.front();
    queue.pop_front();
    return d;
  }
  QueueBackend& push(DirectiveKind kind, std::string text = {}, std::optional<std::string> target = {},
                     std::string reply = "ok") {
    AgentDirective d;
    d.kind = kind;
    d.text = std::move(text);
    d.target = std::move(target);
    d.reply_text = std::move(reply);
    queue.push_back(std::move(d));
    return *this;
  }
  std::deque<AgentDirective> queue;
  std::vector<llm::AgentRequest> requests;
};

Roster roster() {
  return {TeamId{"team-1"},
          {{UserId{"user-1"}, "Amara Quist"}, {UserId{"user-2"}, "Bertil Vance"}, {UserId{"user-3"}, "Cyan Moreau"}}};
}

const UserId A{"user-1"}, B{"user-2"}, C{"user-3"};
const MeetingId M0{"meeting-1"}, M1{"meeting-2"};

capture::MeetingStats uneven_stats() {
  capture::MeetingStats st{M0, 10000, {}};
  auto add = [&](const UserId& u, std::int64_t spoke, bool joined) {
    capture::ParticipantStats p;
    p.speaking = {u, M0, spoke};
    p.attendance = {u, M0, joined ? 10000 : 0, joined};
    st.participants.push_back(p);
  };
  add(A, 8000, true);
  add(B, 1000, true);
  add(C, 0, false);
  return st;
}

struct SolicitationFixture : ::testing::Test {
  Engine engine;
  capture::MeetingStats stats = uneven_stats();
  QueueBackend backend;
  SolicitationContext ctx{M0, MeetingState::closed, roster(), &stats};

  SessionId start(const UserId& u = A) { return engine.start_solicitation(u, ctx, 100).session_id; }
};

TEST_F(SolicitationFixture, OpenerIsAboutParticipation) {
  const auto& s = engine.session(start());
  EXPECT_EQ(s.state, State::init);
  ASSERT_EQ(s.transcript.size(), 1u);
  const auto& opener = s.transcript[0].text;
  EXPECT_NE(opener.find("some members spoke substantially more"), std::string::npos);
  EXPECT_NE(opener.find("included"), std::string::npos);
  EXPECT_EQ(opener.find("8000"), std::string::npos);  // qualitative only
  EXPECT_NE(s.context.at("speaking_summary").find("Amara Quist: well above an even share"), std::string::npos);
  EXPECT_NE(s.context.at("attendance_summary").find("Not present: Cyan Moreau"), std::string::npos);
}

TEST_F(SolicitationFixture, StartErrors) {
  start();
  EXPECT_EQ(code_of([&] { start(); }), ErrorCode::conflict);
  SolicitationContext open = ctx;
  open.meeting_state = MeetingState::open;
  EXPECT_EQ(code_of([&] { engine.start_solicitation(B, open, 0); }), ErrorCode::state);
  SolicitationContext no_stats = ctx;
  no_stats.stats = nullptr;
  EXPECT_EQ(code_of([&] { engine.start_solicitation(B, no_stats, 0); }), ErrorCode::state);
  EXPECT_EQ(code_of([&] { engine.start_solicitation(UserId{"user-9"}, ctx, 0); }), ErrorCode::not_found);
}

TEST_F(SolicitationFixture, DraftTargetApproveFlow) {
  auto id = start();
  backend.push(DirectiveKind::none)
      .push(DirectiveKind::draft_feedback, "Leave a pause before moving on.")
      .push(DirectiveKind::none)
      .push(DirectiveKind::draft_feedback, "Leave a pause before moving on.", "Everyone");
  EXPECT_EQ(engine.handle_user_message(id, "It was fine", 1, backend).state, State::probing);
  EXPECT_EQ(engine.handle_user_message(id, "People rushed", 2, backend).state, State::drafting);
  EXPECT_EQ(engine.session(id).pending_text, "Leave a pause before moving on.");
  EXPECT_EQ(engine.handle_user_message(id, "Sounds right", 3, backend).state, State::targeting);
  auto r = engine.handle_user_message(id, "For all of us", 4, backend);
  EXPECT_EQ(r.state, State::await_approval);
  ASSERT_TRUE(r.draft_id);

  std::vector<std::string> submitted;
  auto record = engine.approve_feedback(*r.draft_id, 5, [&](const DraftFeedback& d) {
    submitted.push_back(d.text);
    return RecordId{"record-1"};
  });
  EXPECT_EQ(record.value, "record-1");
  EXPECT_EQ(submitted.size(), 1u);
  EXPECT_EQ(engine.draft(*r.draft_id).status, DraftStatus::approved);
  EXPECT_EQ(engine.session(id).state, State::probing);
  EXPECT_EQ(code_of([&] { engine.approve_feedback(*r.draft_id, 6, [](auto&) { return RecordId{"x"}; }); }),
            ErrorCode::state);
  EXPECT_EQ(submitted.size(), 1u);
}

TEST_F(SolicitationFixture, SelfTargetRejectedAtApproval) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "Speak up more.", "Amara Quist");
  auto r = engine.handle_user_message(id, "note to self", 1, backend);
  ASSERT_TRUE(r.draft_id);
  EXPECT_FALSE(r.warnings.empty());
  bool called = false;
  EXPECT_EQ(code_of([&] {
              engine.approve_feedback(*r.draft_id, 2, [&](auto&) {
                called = true;
                return RecordId{"x"};
              });
            }),
            ErrorCode::validation);
  EXPECT_FALSE(called);
  EXPECT_EQ(engine.draft(*r.draft_id).status, DraftStatus::draft);
}

TEST_F(SolicitationFixture, RejectedSubmissionLeavesDraftPending) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "Thanks for the notes.", "Bertil Vance");
  auto r = engine.handle_user_message(id, "B was great", 1, backend);
  EXPECT_EQ(code_of([&] {
              engine.approve_feedback(*r.draft_id, 2, [](auto&) -> RecordId { fail(ErrorCode::validation, "no"); });
            }),
            ErrorCode::validation);
  EXPECT_EQ(engine.draft(*r.draft_id).status, DraftStatus::draft);
  EXPECT_EQ(engine.session(id).state, State::await_approval);
}

TEST_F(SolicitationFixture, LintFlagsTeammateNames) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "Bertil Vance interrupted a lot.", "everyone");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  EXPECT_EQ(r.warnings, std::vector<std::string>{"Bertil Vance"});
}

TEST_F(SolicitationFixture, DiscardReturnsToProbing) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "Thanks for the notes.", "Bertil Vance");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  engine.discard_feedback(*r.draft_id, 2);
  EXPECT_EQ(engine.draft(*r.draft_id).status, DraftStatus::discarded);
  EXPECT_EQ(engine.session(id).state, State::probing);
  EXPECT_EQ(code_of([&] { engine.discard_feedback(*r.draft_id, 3); }), ErrorCode::state);
}

TEST_F(SolicitationFixture, RedraftSupersedesOpenDraft) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "v1", "everyone").push(DirectiveKind::draft_feedback, "v2", "everyone");
  auto first = engine.handle_user_message(id, "x", 1, backend);
  auto second = engine.handle_user_message(id, "shorter", 2, backend);
  EXPECT_EQ(engine.draft(*first.draft_id).status, DraftStatus::discarded);
  EXPECT_EQ(engine.draft(*second.draft_id).text, "v2");
  EXPECT_EQ(code_of([&] { engine.approve_feedback(*first.draft_id, 3, [](auto&) { return RecordId{"x"}; }); }),
            ErrorCode::state);
}

TEST_F(SolicitationFixture, IllegalDirectiveIsRepromptedOnce) {
  auto id = start();
  backend.push(DirectiveKind::propose_goal, "g").push(DirectiveKind::none, {}, {}, "Tell me more.");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  EXPECT_TRUE(r.reprompted);
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.state, State::probing);
  EXPECT_EQ(r.reply, "Tell me more.");
  ASSERT_EQ(backend.requests.size(), 2u);
  EXPECT_EQ(backend.requests[1].transcript.back().role, llm::Role::system);
  // The correction note is not part of the stored transcript.
  for (const auto& t : engine.session(id).transcript) EXPECT_NE(t.role, llm::Role::system);
}

TEST_F(SolicitationFixture, TwoIllegalDirectivesFallBack) {
  auto id = start();
  backend.push(DirectiveKind::draft_reflection, "r").push(DirectiveKind::draft_feedback, "t", "Nobody Known");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.state, State::init);
  EXPECT_EQ(engine.session(id).transcript.back().state_after, State::init);
}

TEST_F(SolicitationFixture, GatewayFailureDegrades) {
  auto id = start();
  auto r = engine.handle_user_message(id, "x", 1, backend);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.error_code, "gateway_unavailable");
  EXPECT_EQ(r.state, State::init);
  EXPECT_EQ(engine.session(id).transcript.size(), 3u);
}

TEST_F(SolicitationFixture, CompleteSessionRejectsMessages) {
  auto id = start();
  backend.push(DirectiveKind::mark_complete);
  EXPECT_EQ(engine.handle_user_message(id, "nothing else", 1, backend).state, State::complete);
  EXPECT_EQ(code_of([&] { engine.handle_user_message(id, "hello?", 2, backend); }), ErrorCode::state);
  EXPECT_EQ(code_of([&] { engine.handle_user_message(id, "  ", 2, backend); }), ErrorCode::state);
}

TEST_F(SolicitationFixture, MarkCompleteIsIllegalWhileAwaitingApproval) {
  auto id = start();
  backend.push(DirectiveKind::draft_feedback, "t", "everyone")
      .push(DirectiveKind::mark_complete)
      .push(DirectiveKind::mark_complete);
  engine.handle_user_message(id, "x", 1, backend);
  auto r = engine.handle_user_message(id, "done", 2, backend);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.state, State::await_approval);
}

TEST_F(SolicitationFixture, TranscriptExport) {
  auto id = start();
  backend.push(DirectiveKind::none, {}, {}, "");
  engine.handle_user_message(id, "hi", 7, backend);
  std::istringstream lines(engine.transcript_jsonl(id));
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(lines, line);) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1], (nlohmann::json{{"role", "user"}, {"text", "hi"}, {"state_after", "INIT"}, {"ts_ms", 7}}));
  EXPECT_EQ(rows[2]["state_after"], "PROBING");
  EXPECT_FALSE(rows[2]["text"].get<std::string>().empty());
}

struct IhpFixture : ::testing::Test {
  Engine engine;
  router::FeedbackRouter router;
  QueueBackend backend;
  capture::MeetingStats stats = uneven_stats();
  llm::TemplateRegistry templates = llm::TemplateRegistry::builtin();

  SessionId start(const UserId& u, Condition condition = Condition::treatment) {
    auto r = roster();
    const auto& bundle = router.build_bundle(u, r, {M1, r.team_id, 1});
    return engine.start_ihp(u, {M1, MeetingState::scheduled, condition, r, &bundle, &stats}, 50).session_id;
  }
};

TEST_F(IhpFixture, ContextHasFeedbackAndDefaultButNoSenders) {
  auto r = roster();
  router.submit(A, r, {M0, r.team_id, 0}, "Try summarising decisions at the end.", router::Target::individual(B), 1);
  auto id = start(B);
  const auto& s = engine.session(id);
  EXPECT_EQ(s.state, State::present_feedback);
  const auto prompt = engine.current_prompt(id, templates);
  EXPECT_NE(prompt.find("Try summarising decisions at the end."), std::string::npos);
  EXPECT_NE(prompt.find("ensuring everyone can participate"), std::string::npos);
  EXPECT_NE(prompt.find("Bertil Vance"), std::string::npos);  // owner may appear
  for (const auto& text : {"Amara Quist", "user-1", "Cyan Moreau", "user-3"}) {
    EXPECT_EQ(prompt.find(text), std::string::npos) << text;
    EXPECT_EQ(s.transcript[0].text.find(text), std::string::npos) << text;
  }
  EXPECT_EQ(s.transcript[0].text.find("colleague"), std::string::npos);
  EXPECT_NE(s.transcript[0].text.find("For you: Try summarising"), std::string::npos);
}

TEST_F(IhpFixture, ZeroPeerFeedbackGivesOnlyDefault) {
  auto id = start(C);
  const auto& items = engine.session(id).context.at("feedback_items");
  EXPECT_EQ(std::count(items.begin(), items.end(), '\n'), 1);
  EXPECT_NE(items.find("ensuring everyone can participate"), std::string::npos);
  EXPECT_EQ(engine.session(id).context.at("speaking_summary"), "Did not join that meeting.");
}

TEST_F(IhpFixture, StartErrors) {
  EXPECT_EQ(code_of([&] { start(A, Condition::control); }), ErrorCode::state);
  EXPECT_TRUE(engine.sessions().empty());
  EXPECT_EQ(code_of([&] { start(UserId{"user-9"}); }), ErrorCode::not_found);
  start(A);
  EXPECT_EQ(code_of([&] { start(A); }), ErrorCode::conflict);
}

TEST_F(IhpFixture, FullProcedure) {
  auto id = start(A);
  backend.push(DirectiveKind::none)
      .push(DirectiveKind::propose_goal, "ensure everyone speaks")
      .push(DirectiveKind::none, {}, {}, "That's fine, what would suit you?")
      .push(DirectiveKind::propose_goal, "ask quieter members first");
  EXPECT_EQ(engine.handle_user_message(id, "Interesting", 1, backend).state, State::goal_elicitation);
  auto proposed = engine.handle_user_message(id, "I want everyone to speak", 2, backend);
  EXPECT_EQ(proposed.state, State::await_adoption);
  ASSERT_TRUE(proposed.goal_id);
  EXPECT_EQ(engine.goal(*proposed.goal_id).text, "ensure everyone speaks");

  // Declining withdraws the proposal; nothing is adopted behind the user's back.
  auto declined = engine.handle_user_message(id, "Not that one", 3, backend);
  EXPECT_EQ(declined.state, State::goal_elicitation);
  EXPECT_EQ(code_of([&] { engine.adopt_goal(*proposed.goal_id, 4); }), ErrorCode::state);
  EXPECT_EQ(engine.goal(*proposed.goal_id).status, GoalStatus::proposed);

  auto second = engine.handle_user_message(id, "Maybe asking others", 4, backend);
  EXPECT_EQ(second.state, State::await_adoption);
  EXPECT_TRUE(engine.goal_panel(A, M1)["goals"].empty());

  const auto& goal = engine.adopt_goal(*second.goal_id, 5);
  EXPECT_EQ(goal.status, GoalStatus::adopted);
  EXPECT_EQ(engine.session(id).state, State::transgression_elicitation);
  EXPECT_NE(engine.current_prompt(id, templates).find("Goal adopted so far: ask quieter members first"),
            std::string::npos);

  backend.push(DirectiveKind::draft_reflection, "Last week I talked over Sam.")
      .push(DirectiveKind::draft_reflection, "Last week I cut someone off.");
  auto refl = engine.handle_user_message(id, "I talked over someone", 6, backend);
  EXPECT_EQ(refl.state, State::await_reflection_approval);
  auto revised = engine.handle_user_message(id, "don't name him", 7, backend);
  EXPECT_EQ(code_of([&] { engine.approve_reflection(*refl.reflection_id, 8); }), ErrorCode::state);
  engine.approve_reflection(*revised.reflection_id, 8);
  EXPECT_EQ(engine.session(id).state, State::complete);

  auto panel = engine.goal_panel(A, M1);
  ASSERT_EQ(panel["goals"].size(), 1u);
  EXPECT_EQ(panel["goals"][0]["text"], "ask quieter members first");
  EXPECT_EQ(panel["goals"][0]["reflection"], "Last week I cut someone off.");
  EXPECT_TRUE(engine.goal_panel(B, M1)["goals"].empty());
  EXPECT_EQ(code_of([&] { engine.approve_reflection(*revised.reflection_id, 9); }), ErrorCode::state);
}

TEST_F(IhpFixture, AdoptRequiresAwaitingAdoption) {
  auto id = start(A);
  backend.push(DirectiveKind::propose_goal, "g1");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  engine.adopt_goal(*r.goal_id, 2);
  EXPECT_EQ(code_of([&] { engine.adopt_goal(*r.goal_id, 3); }), ErrorCode::state);
}

TEST_F(IhpFixture, AdoptionInGoalElicitationIsStateError) {
  auto id = start(A);
  backend.push(DirectiveKind::propose_goal, "g1").push(DirectiveKind::none);
  auto r = engine.handle_user_message(id, "x", 1, backend);
  engine.handle_user_message(id, "no", 2, backend);
  EXPECT_EQ(engine.session(id).state, State::goal_elicitation);
  EXPECT_EQ(code_of([&] { engine.adopt_goal(*r.goal_id, 3); }), ErrorCode::state);
  EXPECT_TRUE(engine.goal_panel(A, M1)["goals"].empty());
}

TEST_F(IhpFixture, TransgressionOnlyAfterAdoption) {
  auto id = start(A);
  backend.push(DirectiveKind::draft_reflection, "r").push(DirectiveKind::draft_reflection, "r");
  auto r = engine.handle_user_message(id, "x", 1, backend);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.state, State::present_feedback);
  EXPECT_TRUE(engine.reflections().empty());
}

TEST_F(IhpFixture, ScriptedMockAdoptGoal) {
  auto script = nlohmann::json::parse(R"({
    "entries": [{"template": "ihp.goal_elicitation", "match": "goal",
                 "reply": "How about this?", "directive": {"kind": "PROPOSE_GOAL", "text": "ensure everyone speaks"}}],
    "default": {"reply": "I see."}
  })");
  llm::Gateway gateway(std::make_shared<llm::ScriptedMockProvider>(script), templates, {}, [](llm::Millis) {});
  auto id = start(A);
  EXPECT_EQ(engine.handle_user_message(id, "hm", 1, gateway).state, State::goal_elicitation);
  auto r = engine.handle_user_message(id, "my goal: everyone speaks", 2, gateway);
  EXPECT_EQ(r.state, State::await_adoption);
  EXPECT_EQ(engine.goal(*r.goal_id).text, "ensure everyone speaks");
}

TEST(EngineJson, RoundTripIsExact) {
  Engine engine;
  auto stats = uneven_stats();
  QueueBackend backend;
  auto id = engine.start_solicitation(A, {M0, MeetingState::closed, roster(), &stats}, 1).session_id;
  backend.push(DirectiveKind::draft_feedback, "t", "Cyan Moreau");
  engine.handle_user_message(id, "x", 2, backend);
  nlohmann::json j = engine;
  auto copy = j.get<Engine>();
  EXPECT_EQ(nlohmann::json(copy), j);
  EXPECT_EQ(copy.session_view(id), engine.session_view(id));
}

TEST(EngineGraph, DeclaredEdges) {
  EXPECT_TRUE(is_declared_edge(SessionKind::ihp, State::await_adoption, State::transgression_elicitation));
  EXPECT_FALSE(is_declared_edge(SessionKind::ihp, State::goal_elicitation, State::transgression_elicitation));
  EXPECT_FALSE(is_declared_edge(SessionKind::ihp, State::probing, State::probing));
  EXPECT_FALSE(is_declared_edge(SessionKind::solicitation, State::await_approval, State::complete));
  EXPECT_FALSE(is_declared_edge(SessionKind::solicitation, State::complete, State::complete));
}

// Random directive streams and button presses; every observed state change
// must be a declared edge, and reflections never precede adoption.
TEST(EngineProperty, TransitionSoundnessUnderRandomDirectives) {
  std::mt19937_64 rng(11);
  const DirectiveKind kinds[] = {DirectiveKind::none, DirectiveKind::draft_feedback, DirectiveKind::propose_goal,
                                 DirectiveKind::draft_reflection, DirectiveKind::mark_complete};
  const std::optional<std::string> targets[] = {std::nullopt, "everyone", "Bertil Vance", "Amara Quist", "Ghost"};
  for (int run = 0; run < 300; ++run) {
    Engine engine;
    router::FeedbackRouter router;
    auto stats = uneven_stats();
    auto r = roster();
    QueueBackend backend;
    SessionId id;
    const bool ihp = run % 2;
    if (ihp) {
      const auto& bundle = router.build_bundle(A, r, {M1, r.team_id, 1});
      id = engine.start_ihp(A, {M1, MeetingState::scheduled, Condition::treatment, r, &bundle, &stats}, 0).session_id;
    } else {
      id = engine.start_solicitation(A, {M0, MeetingState::closed, r, &stats}, 0).session_id;
    }
    const auto kind = engine.session(id).kind;
    bool adopted = false;
    std::size_t approvals = 0;
    for (int step = 0; step < 40 && engine.session(id).state != State::complete; ++step) {
      const auto before = engine.session(id).state;
      const auto& s = engine.session(id);
      switch (rng() % 4) {
        case 0:
          if (s.open_draft && rng() % 2) {
            try {
              engine.approve_feedback(*s.open_draft, step, [&](auto&) {
                ++approvals;
                return RecordId{"r"};
              });
            } catch (const Error&) {
            }
          }
          break;
        case 1:
          if (s.open_goal && rng() % 2) {
            try {
              engine.adopt_goal(*s.open_goal, step);
              adopted = true;
            } catch (const Error&) {
            }
          }
          if (s.open_reflection) {
            try {
              engine.approve_reflection(*s.open_reflection, step);
            } catch (const Error&) {
            }
          }
          break;
        default:
          for (int k = 0; k < 2; ++k)
            if (rng() % 5) backend.push(kinds[rng() % 5], "text " + std::to_string(step), targets[rng() % 5]);
          engine.handle_user_message(id, "message " + std::to_string(step), step, backend);
          backend.queue.clear();
      }
      const auto after = engine.session(id).state;
      EXPECT_TRUE(is_declared_edge(kind, before, after) || before == after)
          << to_string(before) << " -> " << to_string(after);
      if (after == State::transgression_elicitation || after == State::await_reflection_approval) {
        EXPECT_TRUE(adopted);
      }
    }
    std::size_t approved = 0;
    for (const auto& [did, d] : engine.drafts()) approved += d.status == DraftStatus::approved;
    EXPECT_EQ(approved, approvals);
  }
}

}  // namespace
}  // namespace huddle::conversation
