#include "huddle/llm/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "huddle/common/error.hpp"

namespace huddle::llm {

Millis RetryPolicy::backoff(int retry) const {
  const double factor = std::max(1.0, backoff_factor);
  const double raw = static_cast<double>(initial_backoff.count()) * std::pow(factor, retry);
  const double capped = std::min(raw, static_cast<double>(std::max(max_backoff, initial_backoff).count()));
  return Millis(static_cast<Millis::rep>(capped));
}

TokenBucket::TokenBucket(double capacity, double refill_per_second, SteadyClock clock)
    : capacity_(std::max(1.0, capacity)),
      refill_per_second_(std::max(0.0, refill_per_second)),
      tokens_(capacity_),
      clock_(std::move(clock)),
      last_(clock_()) {}

void TokenBucket::refill(std::chrono::steady_clock::time_point now) {
  const double elapsed = std::chrono::duration<double>(now - last_).count();
  if (elapsed > 0) {
    tokens_ = std::min(capacity_, tokens_ + elapsed * refill_per_second_);
    last_ = now;
  }
}

bool TokenBucket::acquire(std::chrono::steady_clock::time_point deadline, const Sleeper& sleep) {
  for (;;) {
    Millis wait{0};
    {
      std::lock_guard lock(mutex_);
      const auto now = clock_();
      refill(now);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return true;
      }
      if (refill_per_second_ <= 0) return false;
      const double seconds = (1.0 - tokens_) / refill_per_second_;
      wait = Millis(static_cast<Millis::rep>(std::ceil(seconds * 1000.0)));
      if (now + wait > deadline) return false;
    }
    sleep(wait);
  }
}

namespace {

Sleeper default_sleeper() {
  return [](Millis d) { std::this_thread::sleep_for(d); };
}

SteadyClock default_clock() {
  return [] { return std::chrono::steady_clock::now(); };
}

const char* provider_role(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::agent: return "assistant";
    case Role::user: return "user";
  }
  return "user";
}

}  // namespace

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, TemplateRegistry templates, GatewayConfig config,
                 Sleeper sleep, SteadyClock clock)
    : provider_(std::move(provider)),
      templates_(std::move(templates)),
      config_(std::move(config)),
      sleep_(sleep ? std::move(sleep) : default_sleeper()),
      clock_(clock ? std::move(clock) : default_clock()),
      bucket_(config_.rate_capacity, config_.rate_refill_per_second, clock_) {}

std::string Gateway::render_prompt(const std::string& template_id, const Bindings& bindings) const {
  return templates_.render(template_id, bindings);
}

CompletionResult Gateway::complete(const std::string& template_id, const Bindings& bindings,
                                   std::span<const ChatTurn> transcript) {
  ProviderRequest request;
  request.template_id = template_id;
  request.model = config_.model;
  request.temperature = config_.temperature;
  request.messages.push_back({"system", render_prompt(template_id, bindings)});
  for (const auto& turn : transcript) request.messages.push_back({provider_role(turn.role), turn.text});

  const auto deadline = clock_() + config_.retry.deadline;
  CompletionResult result;
  for (int attempt = 0;; ++attempt) {
    if (!bucket_.acquire(deadline, sleep_))
      fail(ErrorCode::gateway_unavailable, "rate limit would exceed the completion deadline");
    const auto remaining = std::chrono::duration_cast<Millis>(deadline - clock_());
    request.timeout = std::max(Millis{1}, std::min(config_.request_timeout, remaining));
    try {
      result.directive = parse_agent_output(provider_->send(request));
      result.retries = attempt;
      return result;
    } catch (const ProviderError& e) {
      if (!e.retryable()) fail(ErrorCode::provider, e.what(), e.code());
      if (attempt >= config_.retry.max_retries)
        fail(ErrorCode::gateway_unavailable,
             "provider still failing after " + std::to_string(attempt) + " retries: " + e.what(), e.code());
      const auto delay = config_.retry.backoff(attempt);
      if (clock_() + delay > deadline)
        fail(ErrorCode::gateway_unavailable, "completion deadline exceeded", e.code());
      sleep_(delay);
      result.backoff_delays.push_back(delay);
    }
  }
}

AgentDirective Gateway::complete(const AgentRequest& request) {
  return complete(request.template_id, request.bindings, request.transcript).directive;
}

}  // namespace huddle::llm
