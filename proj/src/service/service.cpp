#include "huddle/service/service.hpp"

#include <chrono>
#include <mutex>

#include "huddle/common/error.hpp"

namespace huddle::service {

using nlohmann::json;

llm::AgentDirective RecordingBackend::complete(const llm::AgentRequest& request) {
  try {
    auto d = inner_.complete(request);
    outputs_.push_back(d);
    return d;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::gateway_unavailable || e.code() == ErrorCode::provider)
      outputs_.push_back({{"error", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}});
    throw;
  }
}

llm::AgentDirective ReplayBackend::complete(const llm::AgentRequest& request) {
  if (next_ >= outputs_.size())
    fail(ErrorCode::corrupt_log, "replay asked for an agent turn the log does not have", request.template_id);
  const auto& o = outputs_[next_++];
  if (o.contains("error")) {
    const auto code = error_code_from_string(o["error"].get<std::string>());
    if (!code) fail(ErrorCode::corrupt_log, "unknown recorded error code");
    throw Error(*code, o.value("message", ""), o.value("detail", ""));
  }
  return o.get<llm::AgentDirective>();
}

std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Service::Service(ServiceOptions options, std::shared_ptr<llm::AgentBackend> backend)
    : options_(std::move(options)),
      backend_(std::move(backend)),
      core_(options_.core),
      log_(options_.data_dir, options_.fsync) {
  recover();
}

void Service::recover() {
  auto r = log_.recover();
  warnings_ = std::move(r.warnings);
  std::int64_t from = 0;
  if (r.snapshot) {
    try {
      core_.restore(r.snapshot->state);
    } catch (const std::exception& ex) {
      fail(ErrorCode::corrupt_log, std::string("snapshot does not load: ") + ex.what());
    }
    from = r.snapshot->seq;
  }
  for (const auto& e : r.events) {
    if (e.seq <= from) continue;
    const auto& command = e.payload.at("command");
    const auto& outputs = e.payload.at("agent_outputs");
    ReplayBackend replay(outputs);
    try {
      core_.execute(command, e.ts_ms, replay);
    } catch (const Error& err) {
      fail(ErrorCode::corrupt_log,
           "event " + std::to_string(e.seq) + " (" + e.kind + ") failed on replay: " + err.what(),
           std::string(to_string(err.code())));
    }
    if (!replay.exhausted())
      fail(ErrorCode::corrupt_log, "event " + std::to_string(e.seq) + " left recorded agent turns unused");
    ++replayed_;
  }
  seq_ = r.events.empty() ? 0 : r.events.back().seq;
}

json Service::execute(const json& command) {
  std::unique_lock lock(mutex_);
  // A repeated request changes nothing, so nothing is logged.
  if (auto previous = core_.repeated_request(command)) return *previous;
  const auto now = options_.clock();
  RecordingBackend recording(*backend_);
  json result = core_.execute(command, now, recording);
  PersistedEvent e{seq_ + 1, now, command.at("op").get<std::string>(),
                   {{"command", command}, {"agent_outputs", recording.outputs()}}};
  log_.append(e);
  seq_ = e.seq;
  if (options_.snapshot_every > 0 && seq_ % options_.snapshot_every == 0)
    log_.write_snapshot({seq_, core_.state()});
  return result;
}

json Service::state() const {
  std::shared_lock lock(mutex_);
  return core_.state();
}

std::int64_t Service::last_seq() const {
  std::shared_lock lock(mutex_);
  return seq_;
}

void Service::snapshot() {
  std::unique_lock lock(mutex_);
  log_.write_snapshot({seq_, core_.state()});
}

}  // namespace huddle::service
