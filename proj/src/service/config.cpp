#include "huddle/service/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "huddle/common/error.hpp"
#include "huddle/llm/mock_provider.hpp"
#include "huddle/llm/openai_provider.hpp"

namespace huddle::service {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const char c = k[i];
    if (c == '.') {
      if (i == 0 || i + 1 == k.size() || k[i + 1] == '.') return false;
      continue;
    }
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  }
  return true;
}

void append_utf8(std::string& out, unsigned long cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

[[noreturn]] void syntax(int line, const std::string& what) {
  fail(ErrorCode::config, "config line " + std::to_string(line) + ": " + what, "line " + std::to_string(line));
}

// Parses the value starting at `s[0]`; returns its text and the remainder.
std::pair<std::string, std::string> parse_value(const std::string& s, int line) {
  if (s.empty()) syntax(line, "missing value");
  if (s[0] == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < s.size() && s[i] != '"'; ++i) {
      if (s[i] != '\\') {
        out += s[i];
        continue;
      }
      if (++i >= s.size()) syntax(line, "unterminated escape");
      switch (s[i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u':
        case 'U': {
          const std::size_t len = s[i] == 'u' ? 4 : 8;
          if (i + len >= s.size()) syntax(line, "short unicode escape");
          unsigned long cp = 0;
          const auto hex = s.substr(i + 1, len);
          auto [p, ec] = std::from_chars(hex.data(), hex.data() + hex.size(), cp, 16);
          if (ec != std::errc{} || p != hex.data() + hex.size() || cp > 0x10FFFF) syntax(line, "bad unicode escape");
          append_utf8(out, cp);
          i += len;
          break;
        }
        default: syntax(line, "unknown escape");
      }
    }
    if (i >= s.size()) syntax(line, "unterminated string");
    return {out, s.substr(i + 1)};
  }
  if (s[0] == '\'') {
    const auto end = s.find('\'', 1);
    if (end == std::string::npos) syntax(line, "unterminated string");
    return {s.substr(1, end - 1), s.substr(end + 1)};
  }
  if (s[0] == '[' || s[0] == '{') syntax(line, "arrays and inline tables are not supported");
  const auto end = s.find_first_of(" \t#");
  const auto token = s.substr(0, end);
  const bool number_like = std::all_of(token.begin(), token.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' || c == '_' ||
           c == 'e' || c == 'E';
  });
  if (token != "true" && token != "false" && !number_like) syntax(line, "unquoted value '" + token + "'");
  std::string cleaned;
  for (char c : token)
    if (c != '_') cleaned += c;
  return {cleaned, end == std::string::npos ? std::string{} : s.substr(end)};
}

class Reader {
 public:
  Reader(std::map<std::string, std::string> file, const EnvLookup& env) : file_(std::move(file)), env_(env) {}

  std::optional<std::string> get(const std::string& key) {
    used_.insert(key);
    std::string env_name = "HUDDLE_";
    for (char c : key) env_name += c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(c));
    if (env_) {
      if (auto v = env_(env_name)) return v;
    }
    if (auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

  std::string required(const std::string& key) {
    auto v = get(key);
    if (!v || v->empty()) fail(ErrorCode::config, "missing required config key " + key, key);
    return *v;
  }

  template <class T>
  void number(const std::string& key, T& out, T lo, T hi) {
    auto v = get(key);
    if (!v) return;
    T parsed{};
    const auto* first = v->data();
    const auto* last = v->data() + v->size();
    if (!v->empty() && *first == '+') ++first;
    auto [p, ec] = std::from_chars(first, last, parsed);
    if (ec != std::errc{} || p != last || !(parsed >= lo && parsed <= hi))
      fail(ErrorCode::config, "config key " + key + " must be a number in range", key);
    out = parsed;
  }

  void boolean(const std::string& key, bool& out) {
    auto v = get(key);
    if (!v) return;
    if (*v == "true" || *v == "1") {
      out = true;
    } else if (*v == "false" || *v == "0") {
      out = false;
    } else {
      fail(ErrorCode::config, "config key " + key + " must be true or false", key);
    }
  }

  void text(const std::string& key, std::string& out) {
    if (auto v = get(key)) out = *v;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : file_)
      if (!used_.count(k)) fail(ErrorCode::config, "unknown config key " + k, k);
  }

 private:
  std::map<std::string, std::string> file_;
  const EnvLookup& env_;
  std::set<std::string> used_;
};

}  // namespace

std::map<std::string, std::string> parse_toml_subset(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    if (s[0] == '[') {
      const auto close = s.find(']');
      if (close == std::string::npos) syntax(line, "unterminated section header");
      const auto rest = trim(s.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') syntax(line, "text after section header");
      section = trim(s.substr(1, close - 1));
      if (!valid_key(section)) syntax(line, "bad section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) syntax(line, "expected key = value");
    const auto key = trim(s.substr(0, eq));
    if (!valid_key(key)) syntax(line, "bad key '" + key + "'");
    auto [value, rest] = parse_value(trim(s.substr(eq + 1)), line);
    rest = trim(rest);
    if (!rest.empty() && rest[0] != '#') syntax(line, "text after value");
    const auto full = section.empty() ? key : section + "." + key;
    if (!out.emplace(full, value).second) syntax(line, "duplicate key " + full);
  }
  return out;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

ServiceConfig parse_config(const std::string& text, const EnvLookup& env) {
  Reader r(parse_toml_subset(text), env);
  ServiceConfig c;
  c.bind_address = r.required("bind_address");
  int port = -1;
  r.number("port", port, 0, 65535);
  if (port < 0) fail(ErrorCode::config, "missing required config key port", "port");
  c.port = static_cast<std::uint16_t>(port);
  c.auth_token = r.required("auth_token");
  c.data_dir = r.required("data_dir");

  auto& l = c.llm;
  l.provider = r.required("llm.provider");
  if (l.provider == "mock") {
    l.script = r.required("llm.script");
  } else if (l.provider == "openai") {
    l.base_url = r.required("llm.base_url");
    l.api_key = r.required("llm.api_key");
    l.model = r.required("llm.model");
  } else {
    fail(ErrorCode::config, "llm.provider must be mock or openai", "llm.provider");
  }
  // Keys of the other provider are tolerated so one file can switch via env.
  r.get("llm.script");
  r.get("llm.base_url");
  r.get("llm.api_key");
  r.text("llm.model", l.model);
  r.number("llm.temperature", l.temperature, 0.0, 2.0);
  r.number<std::int64_t>("llm.timeout_ms", l.timeout_ms, 1, 600000);
  r.number("llm.max_retries", l.max_retries, 0, 20);
  r.number<std::int64_t>("llm.initial_backoff_ms", l.initial_backoff_ms, 0, 600000);
  r.number<std::int64_t>("llm.max_backoff_ms", l.max_backoff_ms, 0, 600000);
  r.number<std::int64_t>("llm.deadline_ms", l.deadline_ms, 1, 3600000);
  r.number("llm.rate_capacity", l.rate_capacity, 1.0, 1e6);
  r.number("llm.rate_refill_per_second", l.rate_refill_per_second, 1e-3, 1e6);

  r.number("service.snapshot_every", c.snapshot_every, 0, 1000000);
  r.boolean("service.fsync", c.fsync);
  r.number("service.threads", c.threads, 1, 256);
  r.text("service.agent_name", c.agent_name);
  if (auto v = r.get("service.control_message")) c.control_message = *v;
  r.text("service.log_level", c.log_level);
  static const std::set<std::string> levels = {"trace", "debug", "info", "warn", "error", "critical", "off"};
  if (!levels.count(c.log_level))
    fail(ErrorCode::config, "service.log_level must be one of trace/debug/info/warn/error/critical/off",
         "service.log_level");
  if (c.agent_name.empty()) fail(ErrorCode::config, "service.agent_name is empty", "service.agent_name");
  r.reject_unknown();
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, "cannot read config file", path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto c = parse_config(buf.str(), env);
  const auto base = path.parent_path();
  if (c.data_dir.is_relative()) c.data_dir = base / c.data_dir;
  if (!c.llm.script.empty() && c.llm.script.is_relative()) c.llm.script = base / c.llm.script;
  return c;
}

std::shared_ptr<llm::Gateway> make_gateway(const LlmConfig& c, const std::filesystem::path& base_dir) {
  std::shared_ptr<llm::ChatProvider> provider;
  if (c.provider == "mock") {
    auto script = c.script;
    if (script.is_relative() && !base_dir.empty()) script = base_dir / script;
    provider = std::make_shared<llm::ScriptedMockProvider>(llm::ScriptedMockProvider::from_file(script));
  } else if (c.provider == "openai") {
    provider = std::make_shared<llm::OpenAiProvider>(llm::OpenAiSettings{c.base_url, c.api_key});
  } else {
    fail(ErrorCode::config, "llm.provider must be mock or openai", "llm.provider");
  }
  llm::GatewayConfig g;
  g.model = c.model;
  g.temperature = c.temperature;
  g.request_timeout = llm::Millis(c.timeout_ms);
  g.retry.max_retries = c.max_retries;
  g.retry.initial_backoff = llm::Millis(c.initial_backoff_ms);
  g.retry.max_backoff = llm::Millis(c.max_backoff_ms);
  g.retry.deadline = llm::Millis(c.deadline_ms);
  g.rate_capacity = c.rate_capacity;
  g.rate_refill_per_second = c.rate_refill_per_second;
  return std::make_shared<llm::Gateway>(std::move(provider), llm::TemplateRegistry::builtin(), g);
}

}  // namespace huddle::service
