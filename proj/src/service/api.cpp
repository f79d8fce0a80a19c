#include "huddle/service/api.hpp"

#include <algorithm>
#include <vector>

namespace huddle::service {

using nlohmann::json;

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string percent_decode(const std::string& s, bool plus_is_space) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const int hi = hex_value(s[i + 1]);
      const int lo = hex_value(s[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += plus_is_space && s[i] == '+' ? ' ' : s[i];
  }
  return out;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < path.size()) {
    if (path[pos] == '/') {
      ++pos;
      continue;
    }
    const auto next = path.find('/', pos);
    parts.push_back(path.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    if (next == std::string::npos) break;
    pos = next;
  }
  return parts;
}

json body_object(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    fail(ErrorCode::validation, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::validation, "request body must be a JSON object");
  return j;
}

json command(const std::string& op, json body, std::initializer_list<std::pair<const char*, std::string>> path) {
  body["op"] = op;
  for (const auto& [k, v] : path) body[k] = v;
  return body;
}

ApiResponse json_response(const json& j, int status = 200) { return {status, "application/json", j.dump()}; }

const std::string& query_param(const ParsedTarget& t, const std::string& key) {
  auto it = t.query.find(key);
  if (it == t.query.end() || it->second.empty())
    fail(ErrorCode::validation, "missing query parameter " + key, key);
  return it->second;
}

bool constant_time_equal(const std::string& a, const std::string& b) {
  unsigned diff = a.size() == b.size() ? 0u : 1u;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff |= static_cast<unsigned char>(a[i]) ^ static_cast<unsigned char>(i < b.size() ? b[i] : 0);
  return diff == 0;
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::validation: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict:
    case ErrorCode::state: return 409;
    case ErrorCode::authorization: return 403;
    case ErrorCode::unauthenticated: return 401;
    case ErrorCode::undefined:
    case ErrorCode::degenerate_sample: return 422;
    case ErrorCode::gateway_unavailable: return 503;
    case ErrorCode::provider: return 502;
    case ErrorCode::corrupt_log:
    case ErrorCode::config: return 500;
  }
  return 500;
}

ApiResponse error_response(const Error& e) {
  return json_response({{"error", to_string(e.code())}, {"message", e.what()}, {"detail", e.detail()}},
                       http_status(e.code()));
}

ParsedTarget parse_target(const std::string& target) {
  ParsedTarget t;
  const auto q = target.find('?');
  t.path = percent_decode(target.substr(0, q), false);
  if (q == std::string::npos) return t;
  const auto query = target.substr(q + 1);
  std::size_t pos = 0;
  while (pos <= query.size()) {
    auto amp = query.find('&', pos);
    if (amp == std::string::npos) amp = query.size();
    const auto pair = query.substr(pos, amp - pos);
    if (!pair.empty()) {
      const auto eq = pair.find('=');
      t.query[percent_decode(pair.substr(0, eq), true)] =
          eq == std::string::npos ? std::string{} : percent_decode(pair.substr(eq + 1), true);
    }
    pos = amp + 1;
  }
  return t;
}

Api::Api(Service& service, std::string auth_token) : service_(service), token_(std::move(auth_token)) {}

bool Api::authorized(const std::optional<std::string>& header, const ParsedTarget& target) const {
  if (header) {
    static const std::string prefix = "Bearer ";
    if (header->size() > prefix.size() && header->compare(0, prefix.size(), prefix) == 0)
      return constant_time_equal(header->substr(prefix.size()), token_);
    return false;
  }
  if (auto it = target.query.find("token"); it != target.query.end())
    return constant_time_equal(it->second, token_);
  return false;
}

std::optional<MeetingId> Api::events_route(const std::string& path) {
  const auto parts = split_path(path);
  if (parts.size() == 3 && parts[0] == "meetings" && parts[2] == "events") return MeetingId{parts[1]};
  return std::nullopt;
}

ApiResponse Api::handle(const ApiRequest& request) {
  try {
    const auto target = parse_target(request.target);
    if (target.path == "/health") {
      if (request.method != "GET")
        return json_response({{"error", "method_not_allowed"}, {"message", "GET only"}, {"detail", "/health"}}, 405);
      return json_response({{"status", "ok"}, {"last_seq", service_.last_seq()}});
    }
    if (!authorized(request.authorization, target))
      return error_response(Error(ErrorCode::unauthenticated, "missing or invalid bearer token"));
    return route(request.method, target, request.body);
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return json_response({{"error", "internal"}, {"message", e.what()}, {"detail", ""}}, 500);
  }
}

std::variant<MeetingId, ApiResponse> Api::accept_events_socket(const ApiRequest& request) const {
  try {
    const auto target = parse_target(request.target);
    auto meeting = events_route(target.path);
    if (!meeting) return error_response(Error(ErrorCode::not_found, "no such route", target.path));
    if (!authorized(request.authorization, target))
      return error_response(Error(ErrorCode::unauthenticated, "missing or invalid bearer token"));
    service_.read([&](const Core& c) { return c.meeting_view(*meeting); });
    return *meeting;
  } catch (const Error& e) {
    return error_response(e);
  }
}

std::string Api::handle_event_frame(const MeetingId& meeting, const std::string& frame) {
  try {
    if (frame.find('\n') != std::string::npos)
      fail(ErrorCode::validation, "frames must be a single line of JSON");
    auto body = body_object(frame);
    if (body.empty()) fail(ErrorCode::validation, "empty frame");
    json cmd = {{"op", "ingest_event"},
                {"meeting_id", meeting.value},
                {"user_id", body.contains("user_id") ? body["user_id"] : json()},
                {"kind", body.contains("kind") ? body["kind"] : json()},
                {"ts_ms", body.contains("ts_ms") ? body["ts_ms"] : json()}};
    service_.execute(cmd);
    return json{{"ok", true}}.dump();
  } catch (const Error& e) {
    return json{{"ok", false}, {"error", to_string(e.code())}, {"message", e.what()}}.dump();
  } catch (const std::exception& e) {
    return json{{"ok", false}, {"error", "internal"}, {"message", e.what()}}.dump();
  }
}

ApiResponse Api::route(const std::string& method, const ParsedTarget& target, const std::string& body) {
  const auto p = split_path(target.path);
  const auto n = p.size();
  const bool get = method == "GET";
  const bool post = method == "POST";
  auto exec = [&](const json& cmd, int status = 200) { return json_response(service_.execute(cmd), status); };
  auto read = [&](auto&& f) { return json_response(service_.read(f)); };
  bool path_known = true;

  if (n >= 1 && p[0] == "teams") {
    if (n == 1 && post) return exec(command("create_team", body_object(body), {}), 201);
    if (n == 2 && get) return read([&](const Core& c) { return c.team_view(TeamId{p[1]}); });
    if (n == 3 && p[2] == "meetings" && post)
      return exec(command("schedule_meeting", body_object(body), {{"team_id", p[1]}}), 201);
    path_known = n == 1 || n == 2 || (n == 3 && p[2] == "meetings");
  } else if (n >= 2 && p[0] == "meetings") {
    const MeetingId id{p[1]};
    if (n == 2 && get) return read([&](const Core& c) { return c.meeting_view(id); });
    if (n == 3 && post) {
      if (p[2] == "open") return exec(command("open_meeting", body_object(body), {{"meeting_id", id.value}}));
      if (p[2] == "close") return exec(command("close_meeting", body_object(body), {{"meeting_id", id.value}}));
      if (p[2] == "acknowledge")
        return exec(command("acknowledge", body_object(body), {{"meeting_id", id.value}}));
      if (p[2] == "events") {
        exec(command("ingest_event", body_object(body), {{"meeting_id", id.value}}));
        return json_response({{"ok", true}});
      }
    }
    if (n == 3 && get && p[2] == "stats") return read([&](const Core& c) { return c.meeting_stats(id); });
    static const std::vector<std::string> subs = {"open", "close", "acknowledge", "events", "stats"};
    path_known = n == 2 || (n == 3 && std::find(subs.begin(), subs.end(), p[2]) != subs.end());
  } else if (n >= 1 && p[0] == "phases") {
    if (n == 2 && p[1] == "advance" && post) return exec(command("advance_phase", body_object(body), {}));
    if (n == 1 && get) {
      const UserId user{query_param(target, "user")};
      const MeetingId meeting{query_param(target, "meeting")};
      return read([&](const Core& c) { return c.phase_view(user, meeting); });
    }
    path_known = n == 1 || (n == 2 && p[1] == "advance");
  } else if (n >= 1 && p[0] == "conversations") {
    if (n == 1 && post) return exec(command("start_conversation", body_object(body), {}), 201);
    if (n == 2 && get) return read([&](const Core& c) { return c.conversation_view(SessionId{p[1]}); });
    if (n == 3 && p[2] == "messages" && post)
      return exec(command("send_message", body_object(body), {{"session_id", p[1]}}));
    if (n == 3 && p[2] == "transcript" && get) {
      auto text = service_.read([&](const Core& c) { return c.transcript(SessionId{p[1]}); });
      return {200, "application/x-ndjson", std::move(text)};
    }
    path_known = n <= 2 || (n == 3 && (p[2] == "messages" || p[2] == "transcript"));
  } else if (n == 3 && p[0] == "drafts") {
    if (post && p[2] == "approve") return exec(command("approve_draft", body_object(body), {{"draft_id", p[1]}}));
    if (post && p[2] == "discard") return exec(command("discard_draft", body_object(body), {{"draft_id", p[1]}}));
    path_known = p[2] == "approve" || p[2] == "discard";
  } else if (n == 3 && p[0] == "goals" && p[2] == "adopt") {
    if (post) return exec(command("adopt_goal", body_object(body), {{"goal_id", p[1]}}));
  } else if (n == 3 && p[0] == "reflections" && p[2] == "approve") {
    if (post) return exec(command("approve_reflection", body_object(body), {{"reflection_id", p[1]}}));
  } else if (n == 3 && p[0] == "users") {
    const UserId user{p[1]};
    if (get && p[2] == "outgoing") return read([&](const Core& c) { return c.outgoing(user); });
    if (get && p[2] == "inbox") {
      const MeetingId meeting{query_param(target, "meeting")};
      return read([&](const Core& c) { return c.inbox(user, meeting); });
    }
    if (get && p[2] == "goals") {
      const MeetingId meeting{query_param(target, "meeting")};
      return read([&](const Core& c) { return c.goals(user, meeting); });
    }
    path_known = p[2] == "outgoing" || p[2] == "inbox" || p[2] == "goals";
  } else if (n == 1 && p[0] == "questionnaires") {
    if (post) return exec(command("submit_questionnaire", body_object(body), {}), 201);
    if (get) return read([&](const Core& c) { return c.questionnaires(); });
  } else {
    path_known = false;
  }

  if (!path_known) fail(ErrorCode::not_found, "no such route", target.path);
  return json_response({{"error", "method_not_allowed"}, {"message", method + " is not supported here"},
                        {"detail", target.path}},
                       405);
}

}  // namespace huddle::service
