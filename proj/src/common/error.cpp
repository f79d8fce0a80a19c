#include "huddle/common/error.hpp"

namespace huddle {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::state: return "state_error";
    case ErrorCode::authorization: return "authorization_error";
    case ErrorCode::unauthenticated: return "unauthenticated";
    case ErrorCode::undefined: return "undefined";
    case ErrorCode::degenerate_sample: return "degenerate_sample";
    case ErrorCode::gateway_unavailable: return "gateway_unavailable";
    case ErrorCode::provider: return "provider_error";
    case ErrorCode::corrupt_log: return "corrupt_log";
    case ErrorCode::config: return "config_error";
  }
  return "unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(ErrorCode::config); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace huddle
