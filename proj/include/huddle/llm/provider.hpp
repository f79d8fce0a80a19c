#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <vector>

namespace huddle::llm {

struct ProviderMessage {
  std::string role;  // "system", "assistant" or "user"
  std::string content;
};

struct ProviderRequest {
  std::string template_id;  // routing hint for scripted providers; not sent upstream
  std::vector<ProviderMessage> messages;
  std::string model;
  double temperature = 0.2;
  std::chrono::milliseconds timeout{30000};
};

/// Transport or provider failure. Retryable covers timeouts, connection
/// failures, 429 and 5xx.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(bool retryable, std::string code, const std::string& message)
      : std::runtime_error(message), retryable_(retryable), code_(std::move(code)) {}

  bool retryable() const noexcept { return retryable_; }
  const std::string& code() const noexcept { return code_; }

 private:
  bool retryable_;
  std::string code_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  /// Returns the raw assistant message text or throws ProviderError.
  virtual std::string send(const ProviderRequest& request) = 0;
};

}  // namespace huddle::llm
