#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>

#include "huddle/common/error.hpp"
#include "huddle/common/ids.hpp"
#include "huddle/service/service.hpp"

namespace huddle::service {

struct ApiRequest {
  std::string method;  // "GET", "POST", ...
  std::string target;  // path plus optional query string
  std::string body;
  std::optional<std::string> authorization;  // raw Authorization header
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

int http_status(ErrorCode code) noexcept;
ApiResponse error_response(const Error& e);

struct ParsedTarget {
  std::string path;
  std::map<std::string, std::string> query;
};
/// Splits and percent-decodes a request target.
ParsedTarget parse_target(const std::string& target);

/// HTTP routes and the event WebSocket's frame protocol, independent of the
/// transport that carries them.
class Api {
 public:
  Api(Service& service, std::string auth_token);

  ApiResponse handle(const ApiRequest& request);

  /// Accepts "Bearer <token>" in the header, or ?token=<token> on the
  /// target for clients that cannot set headers on a WebSocket upgrade.
  bool authorized(const std::optional<std::string>& header, const ParsedTarget& target) const;

  /// The meeting id if `path` is /meetings/{id}/events.
  static std::optional<MeetingId> events_route(const std::string& path);

  /// Checks a WebSocket upgrade: auth, then that the meeting exists. Returns
  /// the meeting on success, an error response otherwise.
  std::variant<MeetingId, ApiResponse> accept_events_socket(const ApiRequest& request) const;

  /// One text frame {"user_id","kind","ts_ms"} in, one reply frame out.
  std::string handle_event_frame(const MeetingId& meeting, const std::string& frame);

 private:
  ApiResponse route(const std::string& method, const ParsedTarget& target, const std::string& body);

  Service& service_;
  std::string token_;
};

}  // namespace huddle::service
