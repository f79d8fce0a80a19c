#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "huddle/llm/gateway.hpp"

namespace huddle::service {

/// Flat key/value tables: `key = value` lines, `[section]` headers that
/// prefix keys with "section.", `#` comments, basic and literal strings,
/// integers, floats and booleans. Values come back as their text form.
std::map<std::string, std::string> parse_toml_subset(const std::string& text);

struct LlmConfig {
  std::string provider;  // "mock" or "openai"
  std::filesystem::path script;
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4o-mini";
  double temperature = 0.2;
  std::int64_t timeout_ms = 30000;
  int max_retries = 2;
  std::int64_t initial_backoff_ms = 250;
  std::int64_t max_backoff_ms = 4000;
  std::int64_t deadline_ms = 60000;
  double rate_capacity = 60;
  double rate_refill_per_second = 1;
};

struct ServiceConfig {
  std::string bind_address;
  std::uint16_t port = 0;
  std::string auth_token;
  std::filesystem::path data_dir;
  LlmConfig llm;
  int snapshot_every = 100;
  bool fsync = true;
  int threads = 2;
  std::string agent_name = "Emily";
  std::optional<std::string> control_message;
  std::string log_level = "info";
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// HUDDLE_<KEY> with dots turned into underscores overrides each key, e.g.
/// HUDDLE_LLM_API_KEY for llm.api_key. Missing or malformed keys throw
/// ErrorCode::config with the key as detail.
ServiceConfig parse_config(const std::string& text, const EnvLookup& env = process_env);
ServiceConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

/// Builds the gateway named by the config. Relative script paths resolve
/// against `base_dir`.
std::shared_ptr<llm::Gateway> make_gateway(const LlmConfig& config, const std::filesystem::path& base_dir = {});

}  // namespace huddle::service
