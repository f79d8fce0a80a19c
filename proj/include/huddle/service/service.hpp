#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/llm/gateway.hpp"
#include "huddle/service/core.hpp"
#include "huddle/service/event_log.hpp"

namespace huddle::service {

/// Wraps the live backend and keeps every outcome so the event can carry it.
class RecordingBackend : public llm::AgentBackend {
 public:
  explicit RecordingBackend(llm::AgentBackend& inner) : inner_(inner) {}
  llm::AgentDirective complete(const llm::AgentRequest& request) override;
  const nlohmann::json& outputs() const noexcept { return outputs_; }

 private:
  llm::AgentBackend& inner_;
  nlohmann::json outputs_ = nlohmann::json::array();
};

/// Hands back recorded outcomes in order. Running out means the log and the
/// code disagree, which is reported as corrupt_log.
class ReplayBackend : public llm::AgentBackend {
 public:
  explicit ReplayBackend(const nlohmann::json& outputs) : outputs_(outputs) {}
  llm::AgentDirective complete(const llm::AgentRequest& request) override;
  bool exhausted() const noexcept { return next_ == outputs_.size(); }

 private:
  const nlohmann::json& outputs_;
  std::size_t next_ = 0;
};

using WallClock = std::function<std::int64_t()>;
std::int64_t system_now_ms();

struct ServiceOptions {
  std::filesystem::path data_dir;
  int snapshot_every = 100;  // 0 disables periodic snapshots
  bool fsync = false;
  CoreSettings core;
  WallClock clock = system_now_ms;
};

class Service {
 public:
  /// Recovers from data_dir before returning. Throws corrupt_log when the
  /// log cannot be trusted.
  Service(ServiceOptions options, std::shared_ptr<llm::AgentBackend> backend);

  /// Runs one command; on success appends exactly one event and returns the
  /// command's result.
  nlohmann::json execute(const nlohmann::json& command);

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(mutex_);
    return f(core_);
  }

  nlohmann::json state() const;
  std::int64_t last_seq() const;
  void snapshot();
  const std::vector<std::string>& recovery_warnings() const noexcept { return warnings_; }
  std::size_t replayed_events() const noexcept { return replayed_; }

 private:
  void recover();

  ServiceOptions options_;
  std::shared_ptr<llm::AgentBackend> backend_;
  mutable std::shared_mutex mutex_;
  Core core_;
  EventLog log_;
  std::int64_t seq_ = 0;
  std::vector<std::string> warnings_;
  std::size_t replayed_ = 0;
};

}  // namespace huddle::service
