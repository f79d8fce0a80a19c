#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/capture/capture.hpp"
#include "huddle/conversation/engine.hpp"
#include "huddle/llm/gateway.hpp"
#include "huddle/orchestrator/orchestrator.hpp"
#include "huddle/router/router.hpp"

namespace huddle::service {

struct CoreSettings {
  std::string agent_name = "Emily";
  std::string control_message =
      "Hi! Your next team meeting is coming up. Before it starts, take a moment to think about how your team "
      "works together. See you there!";
  std::string default_feedback = router::kDefaultFeedback;
};

struct Questionnaire {
  std::string questionnaire_id;
  UserId user_id;
  std::optional<MeetingId> meeting_id;
  std::string instrument;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::int64_t created_at_ms = 0;
};

/// All module state behind one deterministic command interface. Every
/// mutation is a JSON command applied with an explicit clock value, which is
/// what the event log records and replays. Commands that fail leave the
/// state untouched.
class Core {
 public:
  explicit Core(CoreSettings settings = {});

  /// A command may carry a client-generated "request_id". Repeating it with
  /// the same command returns the first result unchanged; reusing it for a
  /// different command is a conflict.
  nlohmann::json execute(const nlohmann::json& command, std::int64_t now_ms, llm::AgentBackend& backend);

  /// The stored result if `command` repeats an already executed request id.
  std::optional<nlohmann::json> repeated_request(const nlohmann::json& command) const;

  static constexpr std::size_t kRequestsKept = 10000;

  nlohmann::json team_view(const TeamId& id) const;
  nlohmann::json meeting_view(const MeetingId& id) const;
  nlohmann::json meeting_stats(const MeetingId& id) const;
  nlohmann::json phase_view(const UserId& user, const MeetingId& meeting) const;
  nlohmann::json conversation_view(const SessionId& id) const;
  std::string transcript(const SessionId& id) const;
  nlohmann::json outgoing(const UserId& user) const;
  nlohmann::json inbox(const UserId& user, const MeetingId& meeting) const;
  nlohmann::json goals(const UserId& user, const MeetingId& meeting) const;
  nlohmann::json questionnaires() const;

  /// Rendered system prompt for a session's next turn.
  std::string prompt_for(const SessionId& id, const llm::TemplateRegistry& templates) const;

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

  const orchestrator::Orchestrator& orchestrator() const { return orchestrator_; }
  const capture::CaptureStore& capture() const { return capture_; }
  const router::FeedbackRouter& router() const { return router_; }
  const conversation::Engine& engine() const { return engine_; }
  const CoreSettings& settings() const { return settings_; }

  static const std::vector<std::string>& operations();

 private:
  nlohmann::json start_conversation(const nlohmann::json& c, std::int64_t now_ms);
  nlohmann::json approve_draft(const nlohmann::json& c, std::int64_t now_ms);
  nlohmann::json approve_reflection(const nlohmann::json& c, std::int64_t now_ms);
  nlohmann::json close_meeting(const nlohmann::json& c, std::int64_t now_ms);
  nlohmann::json submit_questionnaire(const nlohmann::json& c, std::int64_t now_ms);
  nlohmann::json requests_json() const;
  nlohmann::json dispatch(const nlohmann::json& c, std::int64_t now_ms, llm::AgentBackend& backend);

  struct Request {
    nlohmann::json command;
    nlohmann::json result;
  };

  CoreSettings settings_;
  orchestrator::Orchestrator orchestrator_;
  capture::CaptureStore capture_;
  router::FeedbackRouter router_;
  conversation::Engine engine_;
  std::vector<Questionnaire> questionnaires_;
  std::map<std::string, Request> requests_;
  std::deque<std::string> request_order_;  // oldest first, for eviction
};

}  // namespace huddle::service
