#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "huddle/llm/chat.hpp"
#include "huddle/llm/directive.hpp"
#include "huddle/llm/provider.hpp"
#include "huddle/llm/templates.hpp"

namespace huddle::llm {

using Millis = std::chrono::milliseconds;
using SteadyClock = std::function<std::chrono::steady_clock::time_point()>;
using Sleeper = std::function<void(Millis)>;

struct RetryPolicy {
  int max_retries = 2;
  Millis initial_backoff{250};
  double backoff_factor = 2.0;
  Millis max_backoff{4000};
  Millis deadline{60000};  // across all attempts and waits

  /// Wait before retry number `retry` (0-based). Never decreases with `retry`.
  Millis backoff(int retry) const;
};

/// Token bucket limiting calls per provider key.
class TokenBucket {
 public:
  TokenBucket(double capacity, double refill_per_second, SteadyClock clock);

  /// Takes a token, waiting through `sleep` if necessary. Returns false if no
  /// token becomes available before `deadline`.
  bool acquire(std::chrono::steady_clock::time_point deadline, const Sleeper& sleep);

 private:
  void refill(std::chrono::steady_clock::time_point now);

  std::mutex mutex_;
  double capacity_;
  double refill_per_second_;
  double tokens_;
  SteadyClock clock_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayConfig {
  std::string model = "gpt-4o-mini";
  double temperature = 0.2;
  Millis request_timeout{30000};
  RetryPolicy retry;
  double rate_capacity = 60;
  double rate_refill_per_second = 1;
};

struct CompletionResult {
  AgentDirective directive;
  int retries = 0;
  std::vector<Millis> backoff_delays;
};

/// What the conversation engine hands to whatever produces agent turns.
struct AgentRequest {
  std::string template_id;
  Bindings bindings;
  std::vector<ChatTurn> transcript;  // may end with a SYSTEM correction note
};

/// Seam between the conversation engine and the model. Implementations throw
/// huddle::Error with gateway_unavailable or provider codes.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual AgentDirective complete(const AgentRequest& request) = 0;
};

class Gateway : public AgentBackend {
 public:
  Gateway(std::shared_ptr<ChatProvider> provider, TemplateRegistry templates,
          GatewayConfig config = {}, Sleeper sleep = {}, SteadyClock clock = {});

  std::string render_prompt(const std::string& template_id, const Bindings& bindings) const;

  /// Renders the template as the system message, appends the transcript, and
  /// calls the provider with bounded retries. Transient failures past the
  /// retry budget or the deadline raise gateway_unavailable; other provider
  /// failures raise ErrorCode::provider with the provider code as detail.
  CompletionResult complete(const std::string& template_id, const Bindings& bindings,
                            std::span<const ChatTurn> transcript);

  AgentDirective complete(const AgentRequest& request) override;

  const TemplateRegistry& templates() const noexcept { return templates_; }
  const GatewayConfig& config() const noexcept { return config_; }

 private:
  std::shared_ptr<ChatProvider> provider_;
  TemplateRegistry templates_;
  GatewayConfig config_;
  Sleeper sleep_;
  SteadyClock clock_;
  TokenBucket bucket_;
};

}  // namespace huddle::llm
