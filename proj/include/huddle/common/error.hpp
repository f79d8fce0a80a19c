#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace huddle {

enum class ErrorCode {
  validation,
  not_found,
  conflict,
  state,
  authorization,
  unauthenticated,
  undefined,
  degenerate_sample,
  gateway_unavailable,
  provider,
  corrupt_log,
  config,
};

std::string_view to_string(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from_string(std::string_view name) noexcept;

// Every module reports failures through this one exception type. `detail`
// carries a machine-readable hint: the pending phase for ordering errors,
// the offending key for config errors, the provider code for provider errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string detail = {}) {
  throw Error(code, message, std::move(detail));
}

}  // namespace huddle
